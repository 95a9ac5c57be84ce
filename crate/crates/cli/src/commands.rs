use std::collections::BTreeMap;

use kidesign::dual::{build_w, write_w_dump};
use kidesign::fit::{extrapolate_to_physical, rate_estimate, Extrapolation};
use kidesign::kim::{delta_k, entanglement_entropy, evolve, moment_operator_streaming, KimConfig};
use kidesign::montecarlo::{log_checkpoints, mc_moment, mc_replica_check, McConfig};
use kidesign::permgroup::{enumerate_sym, weingarten_table, MAX_DEGREE};
use kidesign::replica::ReplicaSweep;
use kidesign::{Boundary, Error};

use crate::args::{Bc, Cli, Command};
use crate::output::{fmt_f64, Table};
use crate::{plot, CliError, Output};

/// Below this every replica deviation is treated as exactly Haar.
const HAAR_FLOOR: f64 = 1e-10;

pub(crate) fn dispatch(cli: &Cli) -> Result<Output, CliError> {
    match &cli.command {
        Command::Weingarten { m, d } => weingarten(*m, *d),
        Command::Exact { n, na, t, bc, k, g } => exact(*n, *na, t, bc, k, *g),
        Command::Replica { k, nmax, t, bc, na, g } => replica(k, *nmax, t, bc, *na, *g),
        Command::Mc { k, t, bc, na, samples, seed, batch, per_decade, replica_n, g } => {
            let mut cfg = McConfig::new(*k, *t, *na, (*bc).into(), *samples, *seed)
                .with_batch(*batch)
                .with_checkpoints(log_checkpoints(*samples, *per_decade));
            cfg.g = *g;
            mc(&cfg, *replica_n)
        }
        Command::Rates { input, column } => rates(&Table::read_csv(input)?, column.as_deref()),
        Command::Figure3 { na, kmax, tmin, tmax, mc_samples, mc_kmax, seed, g } => {
            figure3(*na, *kmax, *tmin, *tmax, *mc_samples, *mc_kmax, *seed, *g)
        }
        Command::Plot { input } => {
            if cli.out.is_none() {
                return Err(CliError::Usage("plot needs --out".into()));
            }
            Ok(Output::File(plot::render(&Table::read_csv(input)?)?.into_bytes()))
        }
        Command::DumpW { na, g } => {
            if cli.out.is_none() {
                return Err(CliError::Usage("dump-w needs --out".into()));
            }
            let w = build_w(*na, *g)?;
            let mut bytes = Vec::new();
            write_w_dump(&w, &mut bytes).map_err(|e| CliError::Io(e.to_string()))?;
            Ok(Output::File(bytes))
        }
    }
}

fn table(table: Table, flags: Vec<String>) -> Output {
    Output::Table { table, flags, summary: None }
}

fn bc_str(bc: Boundary) -> String {
    bc.as_str().to_string()
}

fn weingarten(m: usize, d: f64) -> Result<Output, CliError> {
    let wg = weingarten_table(m, d)?;
    let mut t = Table::new(&["perm_rank", "cycle_type", "wg_value"]);
    for p in enumerate_sym(m)? {
        t.push(vec![p.rank().to_string(), p.cycle_type().to_string(), fmt_f64(wg.value(&p))]);
    }
    Ok(table(t, vec![format!("condition estimate {}", fmt_f64(wg.condition()))]))
}

fn exact(n: usize, na: usize, ts: &[usize], bcs: &[Bc], ks: &[usize], g: f64) -> Result<Output, CliError> {
    let mut t = Table::new(&["n", "na", "t", "bc", "k", "delta_k", "entropy_bits", "wraparound_flag"]);
    let mut flags = Vec::new();
    for &bc in bcs {
        let bc: Boundary = bc.into();
        for &time in ts {
            let cfg = KimConfig::new(n, na, time, bc).with_g(g);
            cfg.validate()?;
            let psi = evolve(&cfg)?;
            let layout = cfg.layout();
            let s = entanglement_entropy(&psi, &layout)?;
            if cfg.wraparound() {
                flags.push(format!("t={time} bc={bc}: light cones wrap around the chain"));
            }
            for &k in ks {
                let d = delta_k(&moment_operator_streaming(&psi, &layout, k)?)?;
                t.push(vec![
                    n.to_string(),
                    na.to_string(),
                    time.to_string(),
                    bc_str(bc),
                    k.to_string(),
                    fmt_f64(d),
                    fmt_f64(s),
                    cfg.wraparound().to_string(),
                ]);
            }
        }
    }
    Ok(table(t, flags))
}

/// Extrapolation of one `(k, t, bc)` series; `None` when it is exactly Haar.
fn extrapolate(series: &[(usize, f64)], k: usize) -> Result<Option<Extrapolation>, CliError> {
    if series.iter().all(|&(_, v)| v < HAAR_FLOOR) {
        return Ok(None);
    }
    Ok(Some(extrapolate_to_physical(series, k)?))
}

fn default_nmax(k: usize, nmax: Option<usize>) -> Result<usize, CliError> {
    match nmax {
        Some(n) => Ok(n),
        None if k <= 4 => Ok(6 - k),
        None => Err(Error::InvalidArgument(format!("k = {k} needs an explicit --nmax (k + n <= {MAX_DEGREE})")).into()),
    }
}

fn replica(ks: &[usize], nmax: Option<usize>, ts: &[usize], bcs: &[Bc], na: usize, g: f64) -> Result<Output, CliError> {
    let w = build_w(na, g)?;
    let mut t = Table::new(&[
        "k",
        "n",
        "t",
        "bc",
        "deviation_trace_norm",
        "fit_a",
        "fit_b",
        "fit_c",
        "extrapolated_norm",
        "fit_residual_flag",
    ]);
    let mut flags = Vec::new();
    for &k in ks {
        let sweep = ReplicaSweep::new(k, default_nmax(k, nmax)?, &w)?;
        for &bc in bcs {
            let bc: Boundary = bc.into();
            for &time in ts {
                let series = sweep.deviation_series(time, bc)?;
                let fit = if series.len() >= 3 { extrapolate(&series, k)? } else { None };
                let (a, b, c, est, flag) = match (&fit, series.len() >= 3) {
                    (Some(e), _) => (
                        fmt_f64(e.fit.a),
                        fmt_f64(e.fit.b),
                        fmt_f64(e.fit.c),
                        fmt_f64(e.estimate),
                        e.fit.flag.as_str().to_string(),
                    ),
                    (None, true) => (String::new(), String::new(), String::new(), fmt_f64(0.0), "haar".into()),
                    (None, false) => (String::new(), String::new(), String::new(), String::new(), "too_few_points".into()),
                };
                if flag != "ok" && flag != "haar" {
                    flags.push(format!("k={k} t={time} bc={bc}: fit {flag}"));
                }
                for &(n, dev) in &series {
                    t.push(vec![
                        k.to_string(),
                        n.to_string(),
                        time.to_string(),
                        bc_str(bc),
                        fmt_f64(dev),
                        a.clone(),
                        b.clone(),
                        c.clone(),
                        est.clone(),
                        flag.clone(),
                    ]);
                }
            }
        }
    }
    Ok(table(t, flags))
}

fn mc(cfg: &McConfig, replica_n: Option<usize>) -> Result<Output, CliError> {
    let w = build_w(cfg.n_a, cfg.g)?;
    let run = match replica_n {
        None => mc_moment(cfg, &w)?,
        Some(n) => mc_replica_check(cfg, n, &w)?,
    };
    let mut t = Table::new(&["k", "t", "bc", "M_checkpoint", "delta_k", "stderr", "converged_flag"]);
    for p in &run.series.points {
        t.push(vec![
            cfg.k.to_string(),
            cfg.t.to_string(),
            bc_str(cfg.bc),
            p.samples.to_string(),
            fmt_f64(p.delta),
            fmt_f64(p.stderr),
            run.series.converged_flag.to_string(),
        ]);
    }
    let mut flags = vec![format!("converged_value {}", fmt_f64(run.series.converged_value))];
    if !run.series.converged_flag && cfg.k >= 2 {
        flags.push("last three checkpoints differ by more than 10%".into());
    }
    Ok(table(t, flags))
}

/// Value column for `rates`: explicit, else the first known one present.
fn value_column(tab: &Table, column: Option<&str>) -> Result<usize, CliError> {
    let candidates: Vec<&str> = match column {
        Some(c) => vec![c],
        None => vec!["extrapolated_norm", "value", "delta_k", "deviation_trace_norm"],
    };
    candidates
        .iter()
        .find_map(|c| tab.column(c))
        .ok_or_else(|| CliError::Schema(format!("no value column among {candidates:?}")))
}

fn rates(tab: &Table, column: Option<&str>) -> Result<Output, CliError> {
    let t_col = tab.column("t").ok_or_else(|| CliError::Schema("missing column `t`".into()))?;
    let v_col = value_column(tab, column)?;
    let k_col = tab.column("k");
    let bc_col = tab.column("bc");
    let kind_col = tab.column("kind");
    let cell = |row: &Vec<String>, c: Option<usize>| c.map(|i| row[i].clone()).unwrap_or_default();
    // (k, bc) -> t -> value, first occurrence of each t
    let mut groups: BTreeMap<(String, String), BTreeMap<usize, f64>> = BTreeMap::new();
    for row in &tab.rows {
        if row.len() != tab.columns.len() {
            return Err(CliError::Schema("ragged CSV row".into()));
        }
        if kind_col.is_some() && cell(row, kind_col) != "replica" {
            continue;
        }
        if row[t_col].is_empty() || row[v_col].is_empty() {
            continue;
        }
        let t: usize = row[t_col].parse().map_err(|_| CliError::Schema(format!("bad t `{}`", row[t_col])))?;
        let v: f64 = row[v_col].parse().map_err(|_| CliError::Schema(format!("bad value `{}`", row[v_col])))?;
        groups.entry((cell(row, k_col), cell(row, bc_col))).or_default().entry(t).or_insert(v);
    }
    if groups.is_empty() {
        return Err(CliError::Schema("no rows to fit".into()));
    }
    let mut out = Table::new(&["k", "bc", "rate", "points"]);
    let mut summary = Vec::new();
    for ((k, bc), series) in groups {
        let pts: Vec<(usize, f64)> = series.into_iter().collect();
        let v = rate_estimate(&pts)?;
        summary.push(format!("k={k} bc={bc} v={v:.2}"));
        out.push(vec![k, bc, fmt_f64(v), pts.len().to_string()]);
    }
    Ok(Output::Table { table: out, flags: Vec::new(), summary: Some(summary) })
}

#[allow(clippy::too_many_arguments)]
fn figure3(
    na: usize,
    kmax: usize,
    tmin: usize,
    tmax: usize,
    mc_samples: u64,
    mc_kmax: usize,
    seed: u64,
    g: f64,
) -> Result<Output, CliError> {
    if !(2..=4).contains(&kmax) {
        return Err(Error::InvalidArgument("figure3 needs 2 <= kmax <= 4 (three replica points with k + n <= 6)".into()).into());
    }
    if tmax < tmin || tmax - tmin < 2 {
        return Err(Error::InvalidArgument("figure3 needs at least three times".into()).into());
    }
    let w = build_w(na, g)?;
    let mut t = Table::new(&["kind", "k", "t", "bc", "value", "stderr", "flag"]);
    let mut flags = Vec::new();
    for k in 2..=kmax {
        let sweep = ReplicaSweep::new(k, 6 - k, &w)?;
        for bc in [Boundary::Periodic, Boundary::Open] {
            let mut pts = Vec::new();
            for time in tmin..=tmax {
                let e = extrapolate_to_physical(&sweep.deviation_series(time, bc)?, k)?;
                if e.fit.flag.as_str() != "ok" {
                    flags.push(format!("k={k} t={time} bc={bc}: fit {}", e.fit.flag.as_str()));
                }
                t.push(vec![
                    "replica".into(),
                    k.to_string(),
                    time.to_string(),
                    bc_str(bc),
                    fmt_f64(e.estimate),
                    String::new(),
                    e.fit.flag.as_str().into(),
                ]);
                pts.push((time, e.estimate));
            }
            if mc_samples > 0 && k <= mc_kmax {
                for time in [2, 3].into_iter().filter(|x| (tmin..=tmax).contains(x)) {
                    let mut cfg = McConfig::new(k, time, na, bc, mc_samples, seed).with_checkpoints(log_checkpoints(mc_samples, 4));
                    cfg.g = g;
                    let run = mc_moment(&cfg, &w)?;
                    let last = run.series.points.last().map(|p| p.stderr).unwrap_or(f64::NAN);
                    if !run.series.converged_flag {
                        flags.push(format!("k={k} t={time} bc={bc}: MC not converged"));
                    }
                    t.push(vec![
                        "mc".into(),
                        k.to_string(),
                        time.to_string(),
                        bc_str(bc),
                        fmt_f64(run.series.converged_value),
                        fmt_f64(last),
                        if run.series.converged_flag { "converged" } else { "unconverged" }.into(),
                    ]);
                }
            }
            let v = rate_estimate(&pts)?;
            t.push(vec!["slope".into(), k.to_string(), String::new(), bc_str(bc), fmt_f64(-v), String::new(), "ok".into()]);
        }
    }
    Ok(table(t, flags))
}

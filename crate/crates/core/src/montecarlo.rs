//! Haar Monte Carlo estimators of the limiting projected ensemble.
//!
//! Each sample draws Haar unitaries on the `t` temporal qubits (one for PBC,
//! two for OBC), builds the unnormalized subsystem state `ψ̃` from `W`, and
//! adds `⟨ψ̃|ψ̃⟩^e (|ψ̃⟩⟨ψ̃|)^{⊗k}` to a running sum. `e = 1 − k` gives the
//! physical moment `ρ^(k)` and `e = n` the integer replica `ρ^(k,n)`.
//!
//! Sample `i` always uses ChaCha8 stream `i` of the seed, so the sampled set
//! does not depend on threads or batching. Samples are spread round-robin
//! over `GROUPS` jackknife groups.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dual::{t0, Boundary, WTensor};
use crate::error::{invalid, mismatch, numerical, Result};
use crate::linalg::{c64, haar_moment_operator, trace, trace_norm, CMatrix, CVector, MomentOperator, C64};
use crate::par::ordered_fold_waves;

pub const GROUPS: usize = 20;
pub const MAX_UNITARY_QUBITS: usize = 10;
/// Relative spread of the last three checkpoints accepted as converged.
pub const PLATEAU_SPREAD: f64 = 0.10;
const INFLIGHT_BYTES: usize = 128 << 20;

#[derive(Clone, Debug, PartialEq)]
pub struct McConfig {
    pub k: usize,
    pub t: usize,
    pub n_a: usize,
    pub bc: Boundary,
    pub g: f64,
    pub samples: u64,
    pub batch: u64,
    pub seed: u64,
    /// Strictly increasing sample counts, the last one equal to `samples`.
    pub checkpoints: Vec<u64>,
}

impl McConfig {
    /// Decade checkpoints from `10³` and the default batch size.
    pub fn new(k: usize, t: usize, n_a: usize, bc: Boundary, samples: u64, seed: u64) -> Self {
        Self {
            k,
            t,
            n_a,
            bc,
            g: crate::kim::DEFAULT_G,
            samples,
            batch: 1 << 12,
            seed,
            checkpoints: log_checkpoints(samples, 1),
        }
    }

    pub fn with_checkpoints(mut self, checkpoints: Vec<u64>) -> Self {
        self.checkpoints = checkpoints;
        self
    }

    pub fn with_batch(mut self, batch: u64) -> Self {
        self.batch = batch;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(invalid("k must be >= 1"));
        }
        if self.n_a == 0 || self.t < t0(self.n_a) {
            return Err(invalid(format!("need n_a >= 1 and t >= t0 = {}", t0(self.n_a.max(1)))));
        }
        if self.t > MAX_UNITARY_QUBITS {
            return Err(invalid(format!("t = {} exceeds {MAX_UNITARY_QUBITS}", self.t)));
        }
        crate::linalg::dense_guard(self.n_a * self.k, "Monte Carlo moment")?;
        if self.samples == 0 || self.batch == 0 {
            return Err(invalid("samples and batch must be positive"));
        }
        if self.checkpoints.is_empty() {
            return Err(invalid("at least one checkpoint is required"));
        }
        if self.checkpoints.windows(2).any(|w| w[0] >= w[1]) || self.checkpoints[0] == 0 {
            return Err(invalid("checkpoints must be positive and strictly increasing"));
        }
        if *self.checkpoints.last().unwrap() != self.samples {
            return Err(invalid("the last checkpoint must equal the sample count"));
        }
        Ok(())
    }
}

/// `per_decade` log-spaced checkpoints from `10³` (or `samples` if smaller)
/// up to and including `samples`.
pub fn log_checkpoints(samples: u64, per_decade: usize) -> Vec<u64> {
    let per_decade = per_decade.max(1);
    let mut out = Vec::new();
    let mut i = 0;
    loop {
        let c = (10f64.powf(3.0 + i as f64 / per_decade as f64)).round() as u64;
        if c >= samples {
            break;
        }
        out.push(c);
        i += 1;
    }
    out.push(samples);
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CheckpointPoint {
    pub samples: u64,
    pub delta: f64,
    /// Jackknife standard error of `delta`.
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceSeries {
    pub points: Vec<CheckpointPoint>,
    /// Mean of the last three points (fewer if the series is shorter).
    pub converged_value: f64,
    /// Relative spread of the last three points at most `PLATEAU_SPREAD`.
    pub converged_flag: bool,
}

impl ConvergenceSeries {
    pub fn from_points(points: Vec<CheckpointPoint>) -> Self {
        let tail = &points[points.len().saturating_sub(3)..];
        let mean = tail.iter().map(|p| p.delta).sum::<f64>() / tail.len().max(1) as f64;
        let hi = tail.iter().map(|p| p.delta).fold(f64::NEG_INFINITY, f64::max);
        let lo = tail.iter().map(|p| p.delta).fold(f64::INFINITY, f64::min);
        let flag = tail.len() == 3 && mean > 0.0 && (hi - lo) / mean <= PLATEAU_SPREAD;
        Self { points, converged_value: mean, converged_flag: flag }
    }
}

/// Counter-based generator for sample `index`.
pub fn sample_stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn gaussian<R: Rng>(rng: &mut R) -> C64 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    c64(re * s, im * s)
}

/// Haar unitary on `q` qubits: QR of a complex Ginibre matrix with the phases
/// of `R`'s diagonal moved into `Q`.
pub fn sample_haar_unitary<R: Rng>(q: usize, rng: &mut R) -> Result<CMatrix> {
    if q > MAX_UNITARY_QUBITS {
        return Err(invalid(format!("q = {q} exceeds {MAX_UNITARY_QUBITS}")));
    }
    let d = 1usize << q;
    let z = DMatrix::from_fn(d, d, |_, _| gaussian(rng));
    let qr = z.qr();
    let r = qr.r();
    let mut u = qr.q();
    for j in 0..d {
        let rjj = r[(j, j)];
        let n = rjj.norm();
        if n == 0.0 {
            return Err(numerical("rank-deficient Ginibre sample"));
        }
        let ph = rjj / n;
        for i in 0..d {
            u[(i, j)] *= ph;
        }
    }
    Ok(u)
}

/// `R[b, a]` with `Tr(W^s R)` the amplitude: the partial trace of the
/// temporal operator over the `t − t0` trailing qubits.
fn reduced_operator(u: &CMatrix, u_prime: Option<&CMatrix>, bc: Boundary, t: usize, t_legs: usize) -> Result<CMatrix> {
    let d = 1usize << t;
    let d0 = 1usize << t_legs;
    let extra = d / d0;
    match bc {
        Boundary::Periodic => {
            Ok(CMatrix::from_fn(d0, d0, |b, a| (0..extra).map(|x| u[(b * extra + x, a * extra + x)]).sum()))
        }
        Boundary::Open => {
            let up = u_prime.ok_or_else(|| invalid("open boundaries need a second unitary"))?;
            if up.nrows() != d || up.ncols() != d {
                return Err(mismatch("second unitary has the wrong size"));
            }
            // ⟨U| = ⟨+|U†, |U'⟩ = U'|0⟩
            let plus = c64((d as f64).sqrt().recip(), 0.0);
            let bra: Vec<C64> = (0..d).map(|i| u.row(i).sum() * plus).collect();
            let ket: Vec<C64> = (0..d).map(|i| up[(i, 0)]).collect();
            Ok(CMatrix::from_fn(d0, d0, |b, a| {
                (0..extra).map(|x| ket[b * extra + x] * bra[a * extra + x].conj()).sum()
            }))
        }
    }
}

/// Unnormalized subsystem state `ψ̃_s = Tr(W^s R)` and its squared norm.
/// PBC: `R` is `U` reduced to the `t0` legs. OBC: `R` is `|U'⟩⟨U|` reduced.
pub fn mc_projected_state(u: &CMatrix, u_prime: Option<&CMatrix>, bc: Boundary, w: &WTensor) -> Result<(CVector, f64)> {
    let d = u.nrows();
    if d != u.ncols() || !d.is_power_of_two() {
        return Err(mismatch("unitary must be square with a power-of-two size"));
    }
    let t = d.trailing_zeros() as usize;
    if t < w.t_legs {
        return Err(mismatch(format!("{t} temporal qubits is fewer than the {} legs of W", w.t_legs)));
    }
    let r = reduced_operator(u, u_prime, bc, t, w.t_legs)?;
    Ok(state_from_reduced(&r, w))
}

fn state_from_reduced(r: &CMatrix, w: &WTensor) -> (CVector, f64) {
    let ns = w.spatial_dim();
    let d0 = w.temporal_dim();
    let data = w.tensor().data();
    let psi = CVector::from_fn(ns, |s, _| {
        let mut acc = c64(0.0, 0.0);
        for a in 0..d0 {
            for b in 0..d0 {
                acc += data[(s * d0 + a) * d0 + b] * r[(b, a)];
            }
        }
        acc
    });
    let p = psi.iter().map(|z| z.norm_sqr()).sum();
    (psi, p)
}

/// Flat row-major `p^e (ψψ†)^{⊗k}` added into `out`.
fn add_summand(out: &mut [C64], psi: &CVector, p: f64, k: usize, e: i32) {
    let mut v = vec![c64(1.0, 0.0)];
    for _ in 0..k {
        let mut nv = Vec::with_capacity(v.len() * psi.len());
        for a in &v {
            for b in psi.iter() {
                nv.push(a * b);
            }
        }
        v = nv;
    }
    let wgt = if e == 0 { 1.0 } else { p.powi(e) };
    let dim = v.len();
    for i in 0..dim {
        let vi = v[i] * wgt;
        let row = &mut out[i * dim..(i + 1) * dim];
        for (o, vj) in row.iter_mut().zip(&v) {
            *o += vi * vj.conj();
        }
    }
}

/// Raw per-group sums of an estimator. The estimate is the normalized total.
#[derive(Clone, Debug)]
pub struct McEstimate {
    pub k: usize,
    pub n_a: usize,
    pub samples: u64,
    /// Unnormalized sums, one per jackknife group.
    pub groups: Vec<CMatrix>,
}

impl McEstimate {
    fn total_of(&self, skip: Option<usize>) -> CMatrix {
        let dim = self.groups[0].nrows();
        let mut acc = CMatrix::zeros(dim, dim);
        for (g, m) in self.groups.iter().enumerate() {
            if Some(g) != skip {
                acc += m;
            }
        }
        acc
    }

    /// Unit-trace estimate from all groups.
    pub fn estimate(&self) -> Result<MomentOperator> {
        MomentOperator::normalized(self.k, self.n_a, self.total_of(None))
    }

    /// Value of `f` at the full estimate and its delete-one-group jackknife
    /// standard error.
    pub fn jackknife<F>(&self, f: F) -> Result<(f64, f64)>
    where
        F: Fn(&CMatrix) -> Result<f64>,
    {
        let full = f(&self.estimate()?.matrix)?;
        let g = self.groups.len();
        if g < 2 {
            return Ok((full, f64::NAN));
        }
        let mut loo = Vec::with_capacity(g);
        for skip in 0..g {
            let rho = MomentOperator::normalized(self.k, self.n_a, self.total_of(Some(skip)))?;
            loo.push(f(&rho.matrix)?);
        }
        let mean = loo.iter().sum::<f64>() / g as f64;
        let var = loo.iter().map(|x| (x - mean).powi(2)).sum::<f64>() * (g - 1) as f64 / g as f64;
        Ok((full, var.sqrt()))
    }

    /// Even and odd groups as two independent estimates.
    pub fn split(&self) -> (McEstimate, McEstimate) {
        let pick = |parity: usize| McEstimate {
            k: self.k,
            n_a: self.n_a,
            samples: 0,
            groups: self.groups.iter().skip(parity).step_by(2).cloned().collect(),
        };
        (pick(0), pick(1))
    }

    /// `‖ρ − ρ_Haar‖₁` with its jackknife error.
    pub fn delta(&self) -> Result<(f64, f64)> {
        let haar = haar_moment_operator(self.n_a, self.k)?.matrix;
        self.jackknife(|rho| trace_norm(&(rho - &haar)))
    }
}

/// Agreement of an estimate with a reference operator. A direction
/// `S = sign(ρ_A − ρ_ref)` is taken from half of the groups and
/// `Tr[S(ρ_B − ρ_ref)]` is measured on the other half, so that the
/// statistic is free of the positive bias of a norm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Agreement {
    pub statistic: f64,
    pub stderr: f64,
}

impl Agreement {
    pub fn z(&self) -> f64 {
        self.statistic.abs() / self.stderr
    }
}

pub fn split_agreement(est: &McEstimate, reference: &CMatrix) -> Result<Agreement> {
    if reference.nrows() != est.groups[0].nrows() {
        return Err(mismatch("reference operator has the wrong size"));
    }
    let (a, b) = est.split();
    let diff = a.estimate()?.matrix - reference;
    let h = (&diff + diff.adjoint()) * c64(0.5, 0.0);
    let eig = h.symmetric_eigen();
    let signs = CMatrix::from_diagonal(&eig.eigenvalues.map(|x| c64(x.signum(), 0.0)));
    let s = &eig.eigenvectors * signs * eig.eigenvectors.adjoint();
    let (statistic, stderr) = b.jackknife(|rho| Ok(trace(&(&s * (rho - reference))).re))?;
    Ok(Agreement { statistic, stderr })
}

/// Result of one estimator run.
#[derive(Clone, Debug)]
pub struct McRun {
    pub estimate: McEstimate,
    pub series: ConvergenceSeries,
}

fn check_inputs(cfg: &McConfig, w: &WTensor) -> Result<()> {
    cfg.validate()?;
    if w.n_a != cfg.n_a {
        return Err(mismatch("W was built for a different n_a"));
    }
    if w.t_legs != t0(cfg.n_a) {
        return Err(mismatch("Monte Carlo needs W at its minimal depth"));
    }
    Ok(())
}

/// Shared sampler: sums `p^e (ψ̃ψ̃†)^{⊗k}` and records `Δ` at each checkpoint.
fn run_estimator(cfg: &McConfig, w: &WTensor, e: i32) -> Result<McRun> {
    check_inputs(cfg, w)?;
    let dim = 1usize << (cfg.n_a * cfg.k);
    let haar = haar_moment_operator(cfg.n_a, cfg.k)?.matrix;
    let mut groups = vec![vec![c64(0.0, 0.0); dim * dim]; GROUPS];
    let mut points = Vec::with_capacity(cfg.checkpoints.len());
    let wave = (INFLIGHT_BYTES / (GROUPS * dim * dim * 16)).clamp(1, 64);
    let mut start = 0u64;
    for &stop in &cfg.checkpoints {
        // batches never straddle a checkpoint
        let n_batches = (stop - start).div_ceil(cfg.batch) as usize;
        let seg_start = start;
        let failed = std::sync::atomic::AtomicBool::new(false);
        groups = ordered_fold_waves(
            n_batches,
            wave,
            groups,
            |b| {
                let lo = seg_start + b as u64 * cfg.batch;
                let hi = (lo + cfg.batch).min(stop);
                let mut part = vec![vec![c64(0.0, 0.0); dim * dim]; GROUPS];
                for i in lo..hi {
                    let mut rng = sample_stream(cfg.seed, i);
                    let sampled = (|| -> Result<(CVector, f64)> {
                        let u = sample_haar_unitary(cfg.t, &mut rng)?;
                        match cfg.bc {
                            Boundary::Periodic => mc_projected_state(&u, None, cfg.bc, w),
                            Boundary::Open => {
                                let up = sample_haar_unitary(cfg.t, &mut rng)?;
                                mc_projected_state(&u, Some(&up), cfg.bc, w)
                            }
                        }
                    })();
                    match sampled {
                        Ok((psi, p)) if p > 0.0 => add_summand(&mut part[(i % GROUPS as u64) as usize], &psi, p, cfg.k, e),
                        Ok(_) => {}
                        Err(_) => failed.store(true, std::sync::atomic::Ordering::Relaxed),
                    }
                }
                part
            },
            |mut acc, _, part| {
                for (a, p) in acc.iter_mut().zip(part) {
                    for (x, y) in a.iter_mut().zip(p) {
                        *x += y;
                    }
                }
                acc
            },
        );
        if failed.load(std::sync::atomic::Ordering::Relaxed) {
            return Err(numerical("Haar sampling failed"));
        }
        start = stop;
        let est = McEstimate {
            k: cfg.k,
            n_a: cfg.n_a,
            samples: stop,
            groups: groups.iter().map(|g| CMatrix::from_row_slice(dim, dim, g)).collect(),
        };
        if !(trace(&est.total_of(None)).re > 0.0) {
            return Err(numerical(format!("all {stop} sampled states have zero norm")));
        }
        let (delta, stderr) = est.jackknife(|rho| trace_norm(&(rho - &haar)))?;
        points.push(CheckpointPoint { samples: stop, delta, stderr });
    }
    let estimate = McEstimate {
        k: cfg.k,
        n_a: cfg.n_a,
        samples: cfg.samples,
        groups: groups.iter().map(|g| CMatrix::from_row_slice(dim, dim, g)).collect(),
    };
    Ok(McRun { estimate, series: ConvergenceSeries::from_points(points) })
}

/// `ρ^(k)`: mean of `(ψ̃ψ̃†)^{⊗k} / ⟨ψ̃|ψ̃⟩^{k−1}`, normalized to unit trace.
pub fn mc_moment(cfg: &McConfig, w: &WTensor) -> Result<McRun> {
    run_estimator(cfg, w, 1 - cfg.k as i32)
}

/// `ρ^(k,n)`: mean of `⟨ψ̃|ψ̃⟩^n (ψ̃ψ̃†)^{⊗k}` over the mean of `⟨ψ̃|ψ̃⟩^{k+n}`.
pub fn mc_replica_check(cfg: &McConfig, n: usize, w: &WTensor) -> Result<McRun> {
    if n > 16 {
        return Err(invalid("replica index n above 16 is not supported"));
    }
    run_estimator(cfg, w, n as i32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dual::build_w;
    use crate::linalg::unitarity_defect;

    #[test]
    fn haar_samples_are_unitary() {
        for i in 0..100 {
            let u = sample_haar_unitary(3, &mut sample_stream(7, i)).unwrap();
            assert!(unitarity_defect(&u) < 1e-12);
        }
        assert!(sample_haar_unitary(11, &mut sample_stream(0, 0)).is_err());
    }

    #[test]
    fn checkpoints() {
        assert_eq!(log_checkpoints(1_000_000, 1), vec![1000, 10_000, 100_000, 1_000_000]);
        assert_eq!(log_checkpoints(500, 1), vec![500]);
        assert_eq!(log_checkpoints(20_000, 2), vec![1000, 3162, 10_000, 20_000]);
        let w = build_w(2, 0.3).unwrap();
        let bad = McConfig::new(2, 2, 2, Boundary::Periodic, 100, 0).with_checkpoints(vec![50, 40, 100]);
        assert!(mc_moment(&bad, &w).is_err());
    }

    #[test]
    fn global_phase_only_changes_state_phase() {
        let w = build_w(2, 0.3).unwrap();
        let mut rng = sample_stream(1, 0);
        let u = sample_haar_unitary(3, &mut rng).unwrap();
        let up = sample_haar_unitary(3, &mut rng).unwrap();
        let ph = c64(0.6, 0.8);
        for bc in [Boundary::Periodic, Boundary::Open] {
            let (a, pa) = mc_projected_state(&u, Some(&up), bc, &w).unwrap();
            let (b, pb) = mc_projected_state(&(&u * ph), Some(&up), bc, &w).unwrap();
            assert!(pa >= 0.0 && (pa - pb).abs() < 1e-14);
            let overlap = a.dotc(&b).norm();
            assert!((overlap - pa).abs() < 1e-13);
        }
    }

    #[test]
    fn plateau_rule() {
        let pts = |v: &[f64]| v.iter().enumerate().map(|(i, &d)| CheckpointPoint { samples: i as u64, delta: d, stderr: 0.0 }).collect();
        let s = ConvergenceSeries::from_points(pts(&[0.5, 0.11, 0.10, 0.105]));
        assert!(s.converged_flag);
        assert!((s.converged_value - 0.105).abs() < 1e-15);
        assert!(!ConvergenceSeries::from_points(pts(&[0.3, 0.1, 0.03])).converged_flag);
    }
}

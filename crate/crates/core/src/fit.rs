//! Exponential extrapolation in the replica index and decay-rate fits.

use nalgebra::{Matrix3, Vector3};

use crate::error::{invalid, Result};

/// RMS residual (log2 units) above which a fit is flagged.
pub const RESIDUAL_THRESHOLD: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FitFlag {
    Ok,
    /// Fit converged but misses the data by more than the threshold.
    HighResidual,
    /// `c <= 0`, non-monotone data or no convergence.
    Degenerate,
    /// Data constant to rounding; `b = 0`.
    Constant,
}

impl FitFlag {
    pub fn as_str(&self) -> &'static str {
        match self {
            FitFlag::Ok => "ok",
            FitFlag::HighResidual => "high_residual",
            FitFlag::Degenerate => "degenerate",
            FitFlag::Constant => "constant",
        }
    }
}

/// `y ≈ a + b e^{-c x}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExpFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// Root-mean-square residual.
    pub residual: f64,
    pub flag: FitFlag,
}

impl ExpFit {
    pub fn eval(&self, x: f64) -> f64 {
        if self.b == 0.0 {
            self.a
        } else {
            self.a + self.b * (-self.c * x).exp()
        }
    }
}

/// Best `(a, b)` for fixed `c`, and the squared residual.
fn linear_part(xs: &[f64], ys: &[f64], c: f64) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let e: Vec<f64> = xs.iter().map(|&x| (-c * x).exp()).collect();
    let se: f64 = e.iter().sum();
    let see: f64 = e.iter().map(|v| v * v).sum();
    let sy: f64 = ys.iter().sum();
    let sey: f64 = e.iter().zip(ys).map(|(a, b)| a * b).sum();
    let det = n * see - se * se;
    let (a, b) = if det.abs() < 1e-300 {
        (sy / n, 0.0)
    } else {
        ((see * sy - se * sey) / det, (n * sey - se * sy) / det)
    };
    let ss = xs.iter().zip(ys).map(|(&x, &y)| (a + b * (-c * x).exp() - y).powi(2)).sum();
    (a, b, ss)
}

/// Nonlinear least squares for `a + b e^{-c x}`, Levenberg-Marquardt from a
/// seed whose `c` comes from ratios of successive differences.
pub fn fit_exponential(xs: &[f64], ys: &[f64]) -> Result<ExpFit> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return Err(invalid("exponential fit needs at least three (x, y) points"));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(invalid("non-finite fit data"));
    }
    let n = xs.len();
    let mean = ys.iter().sum::<f64>() / n as f64;
    let spread = ys.iter().map(|y| (y - mean).abs()).fold(0.0, f64::max);
    if spread <= 1e-12 * mean.abs().max(1.0) {
        return Ok(ExpFit { a: mean, b: 0.0, c: 0.0, residual: spread, flag: FitFlag::Constant });
    }

    // seed: successive differences shrink by e^{-c Δx}
    let mut logs = Vec::new();
    for i in 0..n - 2 {
        let d0 = ys[i + 1] - ys[i];
        let d1 = ys[i + 2] - ys[i + 1];
        let step = xs[i + 1] - xs[i];
        if d0 != 0.0 && d1 / d0 > 0.0 && step > 0.0 {
            logs.push(-(d1 / d0).ln() / step);
        }
    }
    let monotone_seed = !logs.is_empty() && logs.len() == n - 2;
    logs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let c_seed = if logs.is_empty() { 0.5 } else { logs[logs.len() / 2] };
    let c_seed = if c_seed.is_finite() && c_seed > 1e-6 { c_seed } else { 0.5 };
    let (a0, b0, _) = linear_part(xs, ys, c_seed);

    let mut p = Vector3::new(a0, b0, c_seed);
    let cost = |p: &Vector3<f64>| -> f64 {
        xs.iter().zip(ys).map(|(&x, &y)| (p[0] + p[1] * (-p[2] * x).exp() - y).powi(2)).sum()
    };
    let mut cur = cost(&p);
    let mut lambda = 1e-3;
    let mut converged = false;
    for _ in 0..500 {
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        for (&x, &y) in xs.iter().zip(ys) {
            let e = (-p[2] * x).exp();
            let r = p[0] + p[1] * e - y;
            let j = Vector3::new(1.0, e, -p[1] * x * e);
            jtj += j * j.transpose();
            jtr += j * r;
        }
        let mut damped = jtj;
        for i in 0..3 {
            damped[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
        }
        let Some(step) = damped.lu().solve(&(-jtr)) else {
            lambda *= 10.0;
            continue;
        };
        let trial = p + step;
        let tc = cost(&trial);
        if tc.is_finite() && tc <= cur {
            let rel = (cur - tc) / cur.max(1e-300);
            p = trial;
            cur = tc;
            lambda = (lambda / 10.0).max(1e-12);
            if rel < 1e-14 || step.norm() < 1e-13 * (1.0 + p.norm()) || cur < 1e-28 {
                converged = true;
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                converged = true;
                break;
            }
        }
    }
    let residual = (cur / n as f64).sqrt();
    let flag = if !converged || !(p[2] > 0.0) || !monotone_seed {
        FitFlag::Degenerate
    } else if residual > RESIDUAL_THRESHOLD {
        FitFlag::HighResidual
    } else {
        FitFlag::Ok
    };
    Ok(ExpFit { a: p[0], b: p[1], c: p[2], residual, flag })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Extrapolation {
    pub fit: ExpFit,
    /// `1 - k`.
    pub target_n: f64,
    /// `‖δρ^(k)‖₁` estimate, `2^{fit(1-k)}`.
    pub estimate: f64,
}

/// Fit `log₂‖δρ^(k,n)‖₁` against `n` and evaluate at `n = 1 − k`.
pub fn extrapolate_to_physical(series: &[(usize, f64)], k: usize) -> Result<Extrapolation> {
    if series.len() < 3 {
        return Err(invalid("extrapolation needs at least three replica points"));
    }
    if let Some((n, v)) = series.iter().find(|(_, v)| !(*v > 0.0)) {
        return Err(invalid(format!("deviation at n = {n} is {v}, need positive values")));
    }
    let xs: Vec<f64> = series.iter().map(|&(n, _)| n as f64).collect();
    let ys: Vec<f64> = series.iter().map(|&(_, v)| v.log2()).collect();
    let fit = fit_exponential(&xs, &ys)?;
    let target_n = 1.0 - k as f64;
    Ok(Extrapolation { fit, target_n, estimate: fit.eval(target_n).exp2() })
}

/// Decay rate `v` from `value ≈ C 2^{-v t}`: least-squares slope of
/// `-log₂(value)` over the larger-`t` half of the points (at least two).
pub fn rate_estimate(values: &[(usize, f64)]) -> Result<f64> {
    if values.len() < 3 {
        return Err(invalid("rate estimate needs at least three times"));
    }
    if let Some((t, v)) = values.iter().find(|(_, v)| !(*v > 0.0) || !v.is_finite()) {
        return Err(invalid(format!("value at t = {t} is {v}, need positive values")));
    }
    let mut pts: Vec<(f64, f64)> = values.iter().map(|&(t, v)| (t as f64, -v.log2())).collect();
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let keep = pts.len().div_ceil(2).max(2);
    let tail = &pts[pts.len() - keep..];
    let n = tail.len() as f64;
    let mx = tail.iter().map(|p| p.0).sum::<f64>() / n;
    let my = tail.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = tail.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = tail.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(invalid("rate estimate needs distinct times"));
    }
    Ok(sxy / sxx)
}

//! Exact simulation of the finite kicked Ising chain and its projected
//! ensemble.

use std::f64::consts::{FRAC_PI_4, FRAC_PI_8};

use crate::dual::{bath_unitary, Boundary, GateParams};
use crate::error::{invalid, mismatch, numerical, Error, Result};
use crate::linalg::{
    c64, dense_guard, haar_moment_operator, kron_all, kron_vec, permutation_vector_state, trace_norm,
    unitarity_defect, von_neumann_entropy_bits, CMatrix, MomentOperator, C64,
};
use crate::par::ordered_fold;
use crate::permgroup::{enumerate_sym, weingarten_table_any};

pub const DEFAULT_G: f64 = 0.3;
pub const DEFAULT_G_GUARD: f64 = 1e-3;

/// Statevector evolution is refused beyond this many qubits.
pub const MAX_STATE_QUBITS: usize = 26;
/// Largest bath enumerated outcome by outcome.
pub const MAX_BATH_QUBITS: usize = 24;

/// Outcomes with smaller Born probability carry no state.
pub const NULL_PROBABILITY: f64 = 1e-14;

#[derive(Clone, Debug, PartialEq)]
pub struct KimConfig {
    pub n: usize,
    pub n_a: usize,
    pub a_offset: usize,
    pub bc: Boundary,
    pub j: f64,
    pub h: f64,
    pub g: f64,
    pub b1: f64,
    pub bn: f64,
    pub t: usize,
    /// Require `|J| = |h| = π/4` and keep `g` away from multiples of `π/8`.
    pub self_dual: bool,
    pub g_guard: f64,
}

impl KimConfig {
    /// Self-dual chain with the subsystem centred.
    pub fn new(n: usize, n_a: usize, t: usize, bc: Boundary) -> Self {
        Self {
            n,
            n_a,
            a_offset: (n / 2).saturating_sub(n_a / 2),
            bc,
            j: FRAC_PI_4,
            h: FRAC_PI_4,
            g: DEFAULT_G,
            b1: FRAC_PI_4,
            bn: FRAC_PI_4,
            t,
            self_dual: true,
            g_guard: DEFAULT_G_GUARD,
        }
    }

    /// Arbitrary couplings, no self-dual checks.
    pub fn generic(n: usize, n_a: usize, t: usize, bc: Boundary, j: f64, h: f64, g: f64) -> Self {
        Self { j, h, g, self_dual: false, ..Self::new(n, n_a, t, bc) }
    }

    pub fn with_g(mut self, g: f64) -> Self {
        self.g = g;
        self
    }

    pub fn with_t(mut self, t: usize) -> Self {
        self.t = t;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(invalid("n must be positive"));
        }
        if self.n > MAX_STATE_QUBITS {
            return Err(Error::Infeasible {
                what: format!("statevector of {} qubits", self.n),
                bytes: 16u128 << self.n.min(120),
                limit: 16u128 << MAX_STATE_QUBITS,
            });
        }
        if self.n_a == 0 || self.n_a >= self.n {
            return Err(invalid(format!("need 1 <= n_a < n, got n_a = {}", self.n_a)));
        }
        if self.a_offset + self.n_a > self.n {
            return Err(invalid("subsystem runs past the end of the chain"));
        }
        for (name, v) in [("j", self.j), ("h", self.h), ("g", self.g), ("b1", self.b1), ("bn", self.bn)] {
            if !v.is_finite() {
                return Err(invalid(format!("{name} is not finite")));
            }
        }
        if self.self_dual {
            if (self.j.abs() - FRAC_PI_4).abs() > 1e-12 || (self.h.abs() - FRAC_PI_4).abs() > 1e-12 {
                return Err(invalid("self-dual mode needs |J| = |h| = π/4"));
            }
            if !g_is_allowed(self.g, self.g_guard) {
                return Err(invalid(format!(
                    "g = {} lies within {} of a multiple of π/8",
                    self.g, self.g_guard
                )));
            }
        }
        Ok(())
    }

    pub fn bath_len(&self) -> usize {
        self.n - self.n_a
    }

    pub fn layout(&self) -> Layout {
        Layout { n: self.n, a_offset: self.a_offset, n_a: self.n_a }
    }

    /// Past this depth light cones wrap around the finite chain.
    pub fn wraparound(&self) -> bool {
        2 * self.t + 2 > self.n - self.n_a
    }

    pub fn gate_params(&self) -> GateParams {
        GateParams { j: self.j, h: self.h, g: self.g }
    }
}

/// `g` is at least `guard` away from every multiple of `π/8`.
pub fn g_is_allowed(g: f64, guard: f64) -> bool {
    let r = g.rem_euclid(FRAC_PI_8);
    r > guard && FRAC_PI_8 - r > guard
}

/// Split of chain positions into the contiguous subsystem A and the bath.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layout {
    pub n: usize,
    pub a_offset: usize,
    pub n_a: usize,
}

impl Layout {
    pub fn bath_len(&self) -> usize {
        self.n - self.n_a
    }

    /// Qubits to the right of A.
    fn right_len(&self) -> usize {
        self.n - self.a_offset - self.n_a
    }

    /// Full register index of bath outcome `z` (left bits high) and A index `a`.
    #[inline]
    pub fn embed(&self, z: usize, a: usize) -> usize {
        let r = self.right_len();
        let left = z >> r;
        let right = z & ((1 << r) - 1);
        (((left << self.n_a) | a) << r) | right
    }
}

fn energy_phases(cfg: &KimConfig) -> Vec<C64> {
    let n = cfg.n;
    (0..1usize << n)
        .map(|x| {
            let z = |i: usize| 1.0 - 2.0 * ((x >> (n - 1 - i)) & 1) as f64;
            let mut e = 0.0;
            let bonds = match cfg.bc {
                Boundary::Periodic if n > 2 => n,
                Boundary::Periodic => n - 1,
                Boundary::Open => n - 1,
            };
            for i in 0..bonds {
                e += cfg.j * z(i) * z((i + 1) % n);
            }
            for i in 0..n {
                e += cfg.g * z(i);
            }
            if cfg.bc == Boundary::Open {
                e += cfg.b1 * z(0) + cfg.bn * z(n - 1);
            }
            C64::from_polar(1.0, -e)
        })
        .collect()
}

fn kick_matrix(h: f64) -> CMatrix {
    let (c, s) = (h.cos(), h.sin());
    CMatrix::from_row_slice(2, 2, &[c64(c, 0.0), c64(-s, 0.0), c64(s, 0.0), c64(c, 0.0)])
}

/// Dense `U_F = U_h exp(-i H_Ising)`.
pub fn build_floquet(cfg: &KimConfig) -> Result<CMatrix> {
    cfg.validate()?;
    dense_guard(cfg.n, "dense Floquet unitary")?;
    let uh = kron_all(&vec![kick_matrix(cfg.h); cfg.n]);
    let phases = energy_phases(cfg);
    let mut u = uh;
    for (j, ph) in phases.iter().enumerate() {
        let mut col = u.column_mut(j);
        col *= *ph;
    }
    Ok(u)
}

/// `U_F^t |+⟩^{⊗N}`, applying the diagonal and the kicks gate by gate.
pub fn evolve(cfg: &KimConfig) -> Result<Vec<C64>> {
    cfg.validate()?;
    let n = cfg.n;
    let dim = 1usize << n;
    let mut psi = vec![c64((dim as f64).sqrt().recip(), 0.0); dim];
    if cfg.t == 0 {
        return Ok(psi);
    }
    let phases = energy_phases(cfg);
    let (c, s) = (cfg.h.cos(), cfg.h.sin());
    for _ in 0..cfg.t {
        for (a, ph) in psi.iter_mut().zip(&phases) {
            *a *= ph;
        }
        for q in 0..n {
            let stride = 1usize << (n - 1 - q);
            for base in (0..dim).step_by(2 * stride) {
                for i in base..base + stride {
                    let (x0, x1) = (psi[i], psi[i + stride]);
                    psi[i] = x0 * c - x1 * s;
                    psi[i + stride] = x0 * s + x1 * c;
                }
            }
        }
    }
    Ok(psi)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleEntry {
    /// Bath bit string, left bath in the high bits.
    pub outcome: usize,
    pub probability: f64,
    /// Normalized state on A, `None` when the outcome has (numerically) zero probability.
    pub state: Option<Vec<C64>>,
}

#[derive(Clone, Debug)]
pub struct ProjectedEnsemble {
    pub n_a: usize,
    pub entries: Vec<EnsembleEntry>,
}

impl ProjectedEnsemble {
    pub fn total_probability(&self) -> f64 {
        self.entries.iter().map(|e| e.probability).sum()
    }
}

fn check_state(state: &[C64], layout: &Layout) -> Result<()> {
    if state.len() != 1usize << layout.n {
        return Err(mismatch(format!("state has {} amplitudes, layout needs 2^{}", state.len(), layout.n)));
    }
    if layout.n_a == 0 || layout.a_offset + layout.n_a > layout.n || layout.n_a >= layout.n {
        return Err(invalid("subsystem does not fit in the chain"));
    }
    Ok(())
}

fn projected_amplitudes(state: &[C64], layout: &Layout, z: usize, out: &mut [C64]) -> f64 {
    let mut p = 0.0;
    for (a, o) in out.iter_mut().enumerate() {
        *o = state[layout.embed(z, a)];
        p += o.norm_sqr();
    }
    p
}

/// Every bath outcome with its Born probability and projected state.
pub fn projected_ensemble(state: &[C64], layout: &Layout) -> Result<ProjectedEnsemble> {
    check_state(state, layout)?;
    if layout.bath_len() > 20 {
        return Err(Error::Infeasible {
            what: "materialized projected ensemble".into(),
            bytes: (1u128 << layout.bath_len()) * ((16u128 << layout.n_a) + 48),
            limit: 1u128 << 30,
        });
    }
    let da = 1usize << layout.n_a;
    let mut buf = vec![c64(0.0, 0.0); da];
    let entries = (0..1usize << layout.bath_len())
        .map(|z| {
            let p = projected_amplitudes(state, layout, z, &mut buf);
            let st = (p >= NULL_PROBABILITY).then(|| {
                let s = p.sqrt().recip();
                buf.iter().map(|x| x * s).collect()
            });
            EnsembleEntry { outcome: z, probability: p, state: st }
        })
        .collect();
    Ok(ProjectedEnsemble { n_a: layout.n_a, entries })
}

/// `acc += w · (v v†)` on a column-major square buffer.
fn rank_one_update(acc: &mut CMatrix, v: &[C64], w: f64) {
    let d = v.len();
    for j in 0..d {
        let vj = v[j].conj() * w;
        let col = acc.column_mut(j);
        for (a, vi) in col.into_iter().zip(v) {
            *a += vi * vj;
        }
    }
}

fn tensor_power(v: &[C64], k: usize) -> Vec<C64> {
    let mut out = v.to_vec();
    for _ in 1..k {
        out = kron_vec(&out, v);
    }
    out
}

/// `ρ^(k) = Σ_z p(z) (|ψ(z)⟩⟨ψ(z)|)^{⊗k}`.
pub fn moment_operator(ens: &ProjectedEnsemble, k: usize) -> Result<MomentOperator> {
    if k == 0 {
        return Err(invalid("k must be >= 1"));
    }
    dense_guard(ens.n_a * k, "moment operator")?;
    let dim = 1usize << (ens.n_a * k);
    let mut acc = CMatrix::zeros(dim, dim);
    for e in &ens.entries {
        if let Some(st) = &e.state {
            rank_one_update(&mut acc, &tensor_power(st, k), e.probability);
        }
    }
    MomentOperator::new(k, ens.n_a, acc)
}

/// Same operator as `moment_operator(projected_ensemble(..))`, accumulated
/// directly from the state over fixed outcome chunks.
pub fn moment_operator_streaming(state: &[C64], layout: &Layout, k: usize) -> Result<MomentOperator> {
    check_state(state, layout)?;
    if k == 0 {
        return Err(invalid("k must be >= 1"));
    }
    if layout.bath_len() > MAX_BATH_QUBITS {
        return Err(invalid(format!("bath of {} qubits exceeds {MAX_BATH_QUBITS}", layout.bath_len())));
    }
    dense_guard(layout.n_a * k, "moment operator")?;
    let dim = 1usize << (layout.n_a * k);
    let outcomes = 1usize << layout.bath_len();
    let chunk = 1024.min(outcomes);
    let n_chunks = outcomes / chunk;
    let da = 1usize << layout.n_a;
    let acc = ordered_fold(
        n_chunks,
        CMatrix::zeros(dim, dim),
        |c| {
            let mut part = CMatrix::zeros(dim, dim);
            let mut buf = vec![c64(0.0, 0.0); da];
            for z in c * chunk..(c + 1) * chunk {
                let p = projected_amplitudes(state, layout, z, &mut buf);
                if p >= NULL_PROBABILITY {
                    // p · (ψψ†/p)^{⊗k} with ψ unnormalized
                    rank_one_update(&mut part, &tensor_power(&buf, k), p.powi(1 - k as i32));
                }
            }
            part
        },
        |acc, _, part| acc + part,
    );
    MomentOperator::new(k, layout.n_a, acc)
}

/// `½ ‖ρ − ρ_Haar‖₁`.
pub fn delta_k(rho: &MomentOperator) -> Result<f64> {
    let haar = haar_moment_operator(rho.n_a, rho.k)?;
    Ok(0.5 * trace_norm(&(&rho.matrix - &haar.matrix))?)
}

/// First index `t` with `series[t] <= eps`.
pub fn design_time(series: &[f64], eps: f64) -> Option<usize> {
    series.iter().position(|&x| x <= eps)
}

/// Design times for `k = 1, 2, ...`, failing if they are not non-decreasing
/// (an unreached time counts as infinite).
pub fn design_times(series_by_k: &[Vec<f64>], eps: f64) -> Result<Vec<Option<usize>>> {
    let times: Vec<Option<usize>> = series_by_k.iter().map(|s| design_time(s, eps)).collect();
    for w in times.windows(2) {
        let ok = match (w[0], w[1]) {
            (Some(a), Some(b)) => b >= a,
            (None, Some(_)) => false,
            _ => true,
        };
        if !ok {
            return Err(numerical(format!("design times {times:?} decrease with k")));
        }
    }
    Ok(times)
}

/// Reduced density matrix of the contiguous block described by `layout`.
pub fn reduced_density_matrix(state: &[C64], layout: &Layout) -> Result<CMatrix> {
    check_state(state, layout)?;
    let da = 1usize << layout.n_a;
    let mut rho = CMatrix::zeros(da, da);
    let mut buf = vec![c64(0.0, 0.0); da];
    for z in 0..1usize << layout.bath_len() {
        projected_amplitudes(state, layout, z, &mut buf);
        rank_one_update(&mut rho, &buf, 1.0);
    }
    Ok(rho)
}

/// Entanglement entropy of the block in bits.
pub fn entanglement_entropy(state: &[C64], layout: &Layout) -> Result<f64> {
    von_neumann_entropy_bits(&reduced_density_matrix(state, layout)?)
}

/// Finite-bath check of the Haar limit of the temporal bath maps:
/// `‖2^{-L} Σ_z (U(z)⊗U(z)*)^{⊗k} − ∫dU (U⊗U*)^{⊗k}‖₁` over all bit strings
/// `z` of one bath side of length `side_len`.
pub fn dual_unitary_ensemble_check(t: usize, side_len: usize, g: f64, k: usize) -> Result<f64> {
    if k == 0 {
        return Ok(0.0);
    }
    if side_len == 0 || side_len > 16 {
        return Err(invalid("bath side length must be in 1..=16"));
    }
    if t == 0 || t > 6 {
        return Err(invalid("t must be in 1..=6"));
    }
    dense_guard(2 * t * k, "replicated temporal twirl")?;
    let p = GateParams::self_dual(g);
    let d = 1usize << t;
    let dim = d.pow(2 * k as u32);
    let n_z = 1usize << side_len;
    let mut avg = CMatrix::zeros(dim, dim);
    for z in 0..n_z {
        let bits: Vec<usize> = (0..side_len).map(|i| (z >> (side_len - 1 - i)) & 1).collect();
        let u = bath_unitary(&bits, t, &p)?;
        debug_assert!(unitarity_defect(&u) < 1e-8);
        let x = u.kronecker(&u.conjugate());
        avg += kron_all(&vec![x; k]);
    }
    avg /= c64(n_z as f64, 0.0);
    let perms = enumerate_sym(k)?;
    let wg = weingarten_table_any(k, d as f64)?;
    let vecs: Vec<_> = perms
        .iter()
        .map(|s| permutation_vector_state(s, t, k))
        .collect::<Result<_>>()?;
    let mut haar = CMatrix::zeros(dim, dim);
    for (i, s) in perms.iter().enumerate() {
        for (j, tau) in perms.iter().enumerate() {
            let w = wg.value(&s.compose(&tau.inverse()));
            haar += &vecs[i] * vecs[j].adjoint() * c64(w, 0.0);
        }
    }
    trace_norm(&(avg - haar))
}

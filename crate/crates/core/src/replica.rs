//! Replica moment operators `ρ^(k,n)` in the limit of infinite baths.
//!
//! `ρ̃^(k,n) = Σ_{σ,τ ∈ S_m} f(σ,τ) D(σ,τ)`, `m = k + n`, where the diagram
//! `D(σ,τ)` contracts `(W⊗W*)^{⊗m}` between permutation states of the
//! temporal legs and closes the last `n` spatial pairs. All time dependence
//! sits in `f`, which only depends on the conjugacy class of `τσ⁻¹`, so
//! diagrams are summed per class once and reused for every `t` and boundary
//! condition.

use crate::dual::{diagram_value, t0, Boundary, WTensor};
use crate::error::{invalid, mismatch, numerical, Error, Result};
use crate::linalg::{c64, haar_moment_operator, trace_norm, CMatrix, MomentOperator, C64};
use crate::par::{ordered_fold_waves, CompensatedSum};
use crate::permgroup::{
    conjugacy_classes, enumerate_sym, factorial, weingarten_table_any, CycleType, Permutation,
    WeingartenTable, MAX_DEGREE,
};

/// Accumulator memory held in flight by the class sum.
const INFLIGHT_BYTES: usize = 256 << 20;
/// Limit on one set of per-class open-replica tables.
const MAX_TABLE_BYTES: u128 = 1 << 30;
/// Inner-loop iterations above which a class sum is refused.
pub const MAX_WORK: u128 = 1 << 36;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReplicaSpec {
    pub k: usize,
    pub n: usize,
    pub t: usize,
    pub n_a: usize,
    pub bc: Boundary,
    pub g: f64,
}

impl ReplicaSpec {
    pub fn m(&self) -> usize {
        self.k + self.n
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(invalid("k must be >= 1"));
        }
        if self.m() > MAX_DEGREE {
            return Err(invalid(format!("k + n = {} exceeds {MAX_DEGREE}", self.m())));
        }
        if self.n_a == 0 {
            return Err(invalid("n_a must be >= 1"));
        }
        if self.t < t0(self.n_a) {
            return Err(invalid(format!("t = {} is below t0 = {}", self.t, t0(self.n_a))));
        }
        Ok(())
    }
}

/// `Wg(στ⁻¹, 2^t) (2^{t-t0})^{#(στ⁻¹)}`. `table` must be for `(m, 2^t)`.
pub fn prefactor_pbc(
    sigma: &Permutation,
    tau: &Permutation,
    spec: &ReplicaSpec,
    table: &WeingartenTable,
) -> Result<f64> {
    let m = spec.m();
    if table.degree() != m || table.dimension() != (1u64 << spec.t) as f64 {
        return Err(mismatch("Weingarten table does not match (k + n, 2^t)"));
    }
    let pi = sigma.compose(&tau.inverse());
    let scale = (1u64 << (spec.t - t0(spec.n_a))) as f64;
    Ok(table.value(&pi) * scale.powi(pi.cycle_count() as i32))
}

/// `(2^{t-t0})^{#(στ⁻¹)} / (2^t (2^t+1) ... (2^t+m-1))²`.
pub fn prefactor_obc(sigma: &Permutation, tau: &Permutation, spec: &ReplicaSpec) -> f64 {
    let pi = sigma.compose(&tau.inverse());
    obc_factor(pi.cycle_count(), spec.m(), spec.t, spec.n_a)
}

fn obc_factor(cycles: usize, m: usize, t: usize, n_a: usize) -> f64 {
    let d = (1u64 << t) as f64;
    let scale = (1u64 << (t - t0(n_a))) as f64;
    let denom: f64 = (0..m).map(|i| d + i as f64).product();
    scale.powi(cycles as i32) / (denom * denom)
}

#[derive(Clone, Debug)]
pub struct DiagramTerm {
    pub sigma: Permutation,
    pub tau: Permutation,
    /// Operator on `k` replicas: rows label the `W` legs, columns the `W*` legs.
    pub value: CMatrix,
}

/// Single diagram by direct evaluation of the cycle traces, with the last
/// `n` replicas closed by summing their spatial labels.
pub fn diagram_term(sigma: &Permutation, tau: &Permutation, spec: &ReplicaSpec, w: &WTensor) -> Result<DiagramTerm> {
    spec.validate()?;
    let m = spec.m();
    if sigma.degree() != m || tau.degree() != m {
        return Err(mismatch("permutations must act on k + n replicas"));
    }
    if w.t_legs != t0(w.n_a) || w.n_a != spec.n_a {
        return Err(mismatch("diagram needs W at its minimal depth for the same n_a"));
    }
    let ns = w.spatial_dim();
    let slices = w.slices();
    let dim = ns.pow(spec.k as u32);
    let caps = ns.pow(spec.n as u32);
    let digits = |mut x: usize, len: usize| -> Vec<usize> {
        let mut v = vec![0; len];
        for i in (0..len).rev() {
            v[i] = x % ns;
            x /= ns;
        }
        v
    };
    let mut value = CMatrix::zeros(dim, dim);
    for row in 0..dim {
        for col in 0..dim {
            let mut acc = c64(0.0, 0.0);
            for cap in 0..caps {
                let kappa = digits(cap, spec.n);
                let mut mu = digits(row, spec.k);
                let mut nu = digits(col, spec.k);
                mu.extend(&kappa);
                nu.extend(&kappa);
                acc += diagram_value(&slices, sigma, tau, &mu, &nu)?;
            }
            value[(row, col)] = acc;
        }
    }
    Ok(DiagramTerm { sigma: sigma.clone(), tau: tau.clone(), value })
}

/// Diagrams summed over all pairs `(σ, τ)` with `τσ⁻¹` in each conjugacy class.
#[derive(Clone, Debug)]
pub struct ClassDiagrams {
    pub k: usize,
    pub n: usize,
    pub n_a: usize,
    pub classes: Vec<CycleType>,
    /// One operator per class, same layout as `DiagramTerm::value`.
    pub sums: Vec<CMatrix>,
    /// Lexicographic rank of one member of each class.
    representatives: Vec<usize>,
}

fn digit(x: usize, r: usize, m: usize, bits: usize) -> usize {
    (x >> (bits * (m - 1 - r))) & ((1 << bits) - 1)
}

/// Sum every diagram of `S_{k+n}` into its class bucket.
///
/// The temporal legs of copy `r` carry indices `c_r` (from `⟨P(τ)|`, paired
/// with `W*`) and `d_r` (from `|P(σ)⟩`). Copy `r` then contributes
/// `W^{μ_r}[c_{τ(r)}, d_{σ(r)}] W^{ν_r*}[c_r, d_r]`. Closed copies are folded
/// into a weight over `(c, d)`; open copies are kept as an index into a
/// per-class table that is contracted with `W ⊗ W*` at the end.
pub fn class_diagrams(k: usize, n: usize, w: &WTensor) -> Result<ClassDiagrams> {
    let m = k + n;
    if k == 0 || m > MAX_DEGREE {
        return Err(invalid(format!("need k >= 1 and k + n <= {MAX_DEGREE}")));
    }
    if w.t_legs != t0(w.n_a) {
        return Err(mismatch("class sums need W at its minimal depth"));
    }
    let bits = w.t_legs;
    let d0 = 1usize << bits;
    let big_d = 1usize << (bits * m);
    let stride = d0.pow(4);
    let table_len = stride.pow(k as u32);
    let work = (factorial(m) as u128).pow(2) * (big_d as u128).pow(2);
    if work > MAX_WORK {
        return Err(Error::Infeasible {
            what: format!("replica sum with m = {m}, n_a = {}", w.n_a),
            bytes: work,
            limit: MAX_WORK,
        });
    }

    let classes = conjugacy_classes(m)?;
    let table_bytes = classes.len() as u128 * table_len as u128 * 16;
    if table_bytes > MAX_TABLE_BYTES {
        return Err(Error::Infeasible {
            what: format!("open-replica tables for k = {k}, n_a = {}", w.n_a),
            bytes: 2 * table_bytes,
            limit: MAX_TABLE_BYTES,
        });
    }
    let perms = enumerate_sym(m)?;
    let class_of: Vec<usize> = perms
        .iter()
        .map(|p| {
            let ct = p.cycle_type();
            classes.iter().position(|c| *c == ct).unwrap()
        })
        .collect();
    let representatives: Vec<usize> =
        (0..classes.len()).map(|c| class_of.iter().position(|&x| x == c).unwrap()).collect();
    let nc = classes.len();

    let slices = w.slices();
    // Q[(c', c), (d', d)] = Σ_κ W^κ[c', d'] W^{κ*}[c, d]
    let q: Vec<C64> = {
        let mut q = vec![c64(0.0, 0.0); d0.pow(4)];
        for s in &slices {
            for cp in 0..d0 {
                for c in 0..d0 {
                    for dp in 0..d0 {
                        for d in 0..d0 {
                            q[((cp * d0 + c) * d0 + dp) * d0 + d] += s[(cp, dp)] * s[(c, d)].conj();
                        }
                    }
                }
            }
        }
        q
    };
    let qrow = d0 * d0;

    // per-σ (resp. per-τ) index tables over all d (resp. c)
    struct Side {
        open: Vec<usize>,
        capped: Vec<u32>,
    }
    let side = |p: &Permutation, high: bool| -> Side {
        let mut open = vec![0usize; big_d];
        let mut capped = vec![0u32; big_d * n];
        for x in 0..big_d {
            let mut off = 0usize;
            for r in 0..k {
                let pair = digit(x, p.apply(r), m, bits) * d0 + digit(x, r, m, bits);
                let g = if high { pair * d0 * d0 } else { pair };
                off = off * stride + g;
            }
            open[x] = off;
            for j in 0..n {
                let r = k + j;
                capped[x * n + j] = (digit(x, p.apply(r), m, bits) * d0 + digit(x, r, m, bits)) as u32;
            }
        }
        Side { open, capped }
    };
    let taus: Vec<Side> = perms.iter().map(|p| side(p, true)).collect();

    let n_chunks = perms.len().min(16);
    let per_chunk = perms.len().div_ceil(n_chunks);
    let chunk_bytes = nc * table_len * 16;
    let wave = (INFLIGHT_BYTES / chunk_bytes.max(1)).clamp(1, 64);

    let tables = ordered_fold_waves(
        n_chunks,
        wave,
        vec![vec![c64(0.0, 0.0); table_len]; nc],
        |chunk| {
            let mut acc = vec![vec![c64(0.0, 0.0); table_len]; nc];
            let mut rows: Vec<&[C64]> = Vec::with_capacity(n);
            for si in chunk * per_chunk..((chunk + 1) * per_chunk).min(perms.len()) {
                let sigma = &perms[si];
                let sinv = sigma.inverse();
                let sd = side(sigma, false);
                for (ti, tau) in perms.iter().enumerate() {
                    let cls = class_of[tau.compose(&sinv).rank()];
                    let tbl = &mut acc[cls];
                    let ts = &taus[ti];
                    for c in 0..big_d {
                        let base = ts.open[c];
                        if n == 0 {
                            for &b in &sd.open {
                                tbl[base + b].re += 1.0;
                            }
                            continue;
                        }
                        rows.clear();
                        for j in 0..n {
                            let a = ts.capped[c * n + j] as usize;
                            rows.push(&q[a * qrow..(a + 1) * qrow]);
                        }
                        for d in 0..big_d {
                            let betas = &sd.capped[d * n..(d + 1) * n];
                            let mut wgt = rows[0][betas[0] as usize];
                            for j in 1..n {
                                wgt *= rows[j][betas[j] as usize];
                            }
                            tbl[base + sd.open[d]] += wgt;
                        }
                    }
                }
            }
            acc
        },
        |mut total, _, part| {
            for (t, p) in total.iter_mut().zip(part) {
                for (x, y) in t.iter_mut().zip(p) {
                    *x += y;
                }
            }
            total
        },
    );

    // contract open copies with Φ[(μ, ν), g] = W^μ[a, b] W^{ν*}[c, d]
    let ns = w.spatial_dim();
    let phi: Vec<C64> = {
        let mut phi = vec![c64(0.0, 0.0); ns * ns * stride];
        for mu in 0..ns {
            for nu in 0..ns {
                for a in 0..d0 {
                    for c in 0..d0 {
                        for b in 0..d0 {
                            for d in 0..d0 {
                                let g = ((a * d0 + c) * d0 + b) * d0 + d;
                                phi[(mu * ns + nu) * stride + g] = slices[mu][(a, b)] * slices[nu][(c, d)].conj();
                            }
                        }
                    }
                }
            }
        }
        phi
    };
    let sums = tables
        .into_iter()
        .map(|tbl| contract_open(tbl, k, stride, ns, &phi))
        .collect();
    Ok(ClassDiagrams { k, n, n_a: w.n_a, classes, sums, representatives })
}

/// Replace each open group of the table, one at a time, by its `(μ, ν)` pair,
/// then reorder to rows `μ⃗` and columns `ν⃗`.
fn contract_open(mut x: Vec<C64>, k: usize, stride: usize, ns: usize, phi: &[C64]) -> CMatrix {
    let out_dim = ns * ns;
    for r in 0..k {
        // layout: [done groups (out_dim each)] [group r (stride)] [rest (stride each)]
        let left = out_dim.pow(r as u32);
        let right = stride.pow((k - 1 - r) as u32);
        let mut y = vec![c64(0.0, 0.0); left * out_dim * right];
        for l in 0..left {
            for o in 0..out_dim {
                let prow = &phi[o * stride..(o + 1) * stride];
                for (g, &p) in prow.iter().enumerate() {
                    if p == c64(0.0, 0.0) {
                        continue;
                    }
                    let src = &x[(l * stride + g) * right..(l * stride + g + 1) * right];
                    let dst = &mut y[(l * out_dim + o) * right..(l * out_dim + o + 1) * right];
                    for (dv, sv) in dst.iter_mut().zip(src) {
                        *dv += p * sv;
                    }
                }
            }
        }
        x = y;
    }
    let dim = ns.pow(k as u32);
    CMatrix::from_fn(dim, dim, |row, col| {
        let mut idx = 0;
        for r in 0..k {
            let mu = (row / ns.pow((k - 1 - r) as u32)) % ns;
            let nu = (col / ns.pow((k - 1 - r) as u32)) % ns;
            idx = idx * out_dim + mu * ns + nu;
        }
        x[idx]
    })
}

impl ClassDiagrams {
    pub fn m(&self) -> usize {
        self.k + self.n
    }

    fn prefactors(&self, t: usize, bc: Boundary) -> Result<Vec<f64>> {
        let m = self.m();
        if t < t0(self.n_a) {
            return Err(invalid(format!("t = {t} is below t0 = {}", t0(self.n_a))));
        }
        if t > 40 {
            return Err(invalid("t beyond 40 overflows the prefactors"));
        }
        let scale = (1u64 << (t - t0(self.n_a))) as f64;
        match bc {
            Boundary::Periodic => {
                let table = weingarten_table_any(m, (1u64 << t) as f64)?;
                Ok(self
                    .classes
                    .iter()
                    .zip(&self.representatives)
                    .map(|(c, &rep)| table.value_by_rank(rep) * scale.powi(c.cycle_count() as i32))
                    .collect())
            }
            Boundary::Open => Ok(self
                .classes
                .iter()
                .map(|c| obc_factor(c.cycle_count(), m, t, self.n_a))
                .collect()),
        }
    }

    /// Unnormalized `Σ_{σ,τ} f(σ,τ) D(σ,τ)`. Off-diagonal classes are added
    /// first, the identity class last.
    pub fn raw_sum(&self, t: usize, bc: Boundary) -> Result<CMatrix> {
        let f = self.prefactors(t, bc)?;
        let dim = self.sums[0].nrows();
        let mut acc = CompensatedSum::new(dim * dim);
        let identity_class = self.classes.iter().position(|c| c.cycle_count() == self.m()).unwrap();
        for (i, s) in self.sums.iter().enumerate() {
            if i != identity_class {
                acc.add_scaled(s.as_slice(), f[i]);
            }
        }
        acc.add_scaled(self.sums[identity_class].as_slice(), f[identity_class]);
        Ok(CMatrix::from_vec(dim, dim, acc.total()))
    }

    /// `ρ^(k,n)` at depth `t`, normalized to unit trace.
    pub fn moment(&self, t: usize, bc: Boundary) -> Result<MomentOperator> {
        let raw = self.raw_sum(t, bc)?;
        let tr = crate::linalg::trace(&raw);
        if !(tr.re > 0.0) {
            return Err(numerical(format!("replica sum has non-positive trace {tr}")));
        }
        let rho = MomentOperator::normalized(self.k, self.n_a, raw)?;
        let diag = rho.diagnostics()?;
        if diag.hermitian_defect > 1e-9 || diag.min_eigenvalue < -1e-8 {
            return Err(numerical(format!("replica moment fails validation: {diag:?}")));
        }
        Ok(rho)
    }

    /// `‖ρ^(k,n) − ρ_Haar^(k)‖₁`.
    pub fn deviation(&self, t: usize, bc: Boundary) -> Result<f64> {
        let rho = self.moment(t, bc)?;
        let haar = haar_moment_operator(self.n_a, self.k)?;
        trace_norm(&(rho.matrix - haar.matrix))
    }
}

/// `ρ^(k,n)` for one spec.
pub fn replica_moment(spec: &ReplicaSpec, w: &WTensor) -> Result<MomentOperator> {
    spec.validate()?;
    if w.n_a != spec.n_a {
        return Err(mismatch("W was built for a different n_a"));
    }
    class_diagrams(spec.k, spec.n, w)?.moment(spec.t, spec.bc)
}

/// Class sums for `n = 0..=n_max` at fixed `k`, reusable across `t` and bc.
#[derive(Clone, Debug)]
pub struct ReplicaSweep {
    pub k: usize,
    pub per_n: Vec<ClassDiagrams>,
}

impl ReplicaSweep {
    pub fn new(k: usize, n_max: usize, w: &WTensor) -> Result<Self> {
        if k + n_max > MAX_DEGREE {
            return Err(invalid(format!("k + n_max = {} exceeds {MAX_DEGREE}", k + n_max)));
        }
        let per_n = (0..=n_max).map(|n| class_diagrams(k, n, w)).collect::<Result<_>>()?;
        Ok(Self { k, per_n })
    }

    /// `(n, ‖δρ^(k,n)‖₁)` for every stored `n`.
    pub fn deviation_series(&self, t: usize, bc: Boundary) -> Result<Vec<(usize, f64)>> {
        self.per_n.iter().map(|cd| Ok((cd.n, cd.deviation(t, bc)?))).collect()
    }
}

pub fn deviation_series(k: usize, n_max: usize, t: usize, bc: Boundary, w: &WTensor) -> Result<Vec<(usize, f64)>> {
    ReplicaSweep::new(k, n_max, w)?.deviation_series(t, bc)
}

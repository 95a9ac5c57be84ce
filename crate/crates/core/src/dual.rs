//! Space-time dual objects of the kicked Ising circuit.
//!
//! Contracting the circuit along space, a site with measured bit `x`
//! becomes a diagonal operator `L(x)` on `t` temporal qubits and every Ising
//! bond a transfer operator `T`. The amplitude of a full bit string is then a
//! product of `L`s and `T`s, with the first site applied first. Temporal
//! qubit 0 (the most significant bit) is the first Floquet step.

use std::f64::consts::FRAC_PI_4;
use std::io::{Read, Write};

use crate::error::{invalid, mismatch, numerical, Error, Result};
use crate::linalg::{c64, partial_trace, trace, unitarity_defect, CMatrix, Tensor, C64};
use crate::permgroup::Permutation;

/// Dense W' and bath contractions beyond this many temporal qubits are refused.
pub const MAX_TEMPORAL_QUBITS: usize = 10;

/// Gate angles entering the dual picture.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GateParams {
    pub j: f64,
    pub h: f64,
    pub g: f64,
}

impl GateParams {
    pub fn self_dual(g: f64) -> Self {
        Self { j: FRAC_PI_4, h: FRAC_PI_4, g }
    }
}

pub fn t0(n_a: usize) -> usize {
    n_a.div_ceil(2)
}

fn temporal_guard(t: usize) -> Result<()> {
    if t > MAX_TEMPORAL_QUBITS {
        let dim = 1u128 << t;
        return Err(Error::Infeasible {
            what: format!("temporal register of {t} qubits"),
            bytes: dim * dim * 16,
            limit: (1u128 << (2 * MAX_TEMPORAL_QUBITS)) * 16,
        });
    }
    Ok(())
}

pub struct ElementaryTensors {
    pub hadamard: CMatrix,
    /// `delta3[z1, z2, z3] = δ_{z1 z2 z3} e^{-i g (1 - 2 z1)}`.
    pub delta3: Tensor,
}

pub fn elementary_tensors(g: f64) -> ElementaryTensors {
    let s = 0.5f64.sqrt();
    let hadamard = CMatrix::from_row_slice(2, 2, &[c64(s, 0.0), c64(s, 0.0), c64(s, 0.0), c64(-s, 0.0)]);
    let mut delta3 = Tensor::zeros(vec![2, 2, 2]);
    for z in 0..2 {
        let sign = 1.0 - 2.0 * z as f64;
        delta3.set(&[z, z, z], C64::from_polar(1.0, -g * sign));
    }
    ElementaryTensors { hadamard, delta3 }
}

/// Diagonal of `L(x)` for a site with measured bit `x` and longitudinal
/// field `g + extra`, including the `1/√2` of the `|+⟩` input.
pub fn site_operator(x: usize, t: usize, p: &GateParams, extra: f64) -> Result<Vec<C64>> {
    temporal_guard(t)?;
    if x > 1 {
        return Err(invalid(format!("measured bit {x} is not 0 or 1")));
    }
    let (c, s) = (p.h.cos(), p.h.sin());
    // exp(-i h σ^y) = [[c, -s], [s, c]]
    let kick = [[c, -s], [s, c]];
    let field = p.g + extra;
    let dim = 1usize << t;
    let mut out = Vec::with_capacity(dim);
    for a in 0..dim {
        let bit = |step: usize| (a >> (t - 1 - step)) & 1;
        let mut val = c64(0.5f64.sqrt(), 0.0);
        let mut phase = 0.0;
        for step in 0..t {
            phase -= field * (1.0 - 2.0 * bit(step) as f64);
        }
        val *= C64::from_polar(1.0, phase);
        for step in 0..t.saturating_sub(1) {
            val *= kick[bit(step + 1)][bit(step)];
        }
        // at t = 0 the site is just ⟨x|+⟩
        if t > 0 {
            val *= kick[x][bit(t - 1)];
        }
        out.push(val);
    }
    Ok(out)
}

/// Ising bond in the temporal direction: `⊗_s [[e^{-iJ}, e^{iJ}], [e^{iJ}, e^{-iJ}]]`.
pub fn coupling_operator(t: usize, j: f64) -> Result<CMatrix> {
    temporal_guard(t)?;
    let dim = 1usize << t;
    let same = C64::from_polar(1.0, -j);
    let diff = C64::from_polar(1.0, j);
    Ok(CMatrix::from_fn(dim, dim, |a, b| {
        let flips = (a ^ b).count_ones() as usize;
        let mut v = c64(1.0, 0.0);
        for _ in 0..flips {
            v *= diff;
        }
        for _ in 0..t - flips {
            v *= same;
        }
        v
    }))
}

fn scale_rows(diag: &[C64], m: &CMatrix) -> CMatrix {
    let mut out = m.clone();
    for (i, &d) in diag.iter().enumerate() {
        let mut row = out.row_mut(i);
        row *= d;
    }
    out
}

/// Boundary conditions of the spatial chain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Boundary {
    Periodic,
    Open,
}

impl Boundary {
    pub fn as_str(&self) -> &'static str {
        match self {
            Boundary::Periodic => "pbc",
            Boundary::Open => "obc",
        }
    }
}

impl std::fmt::Display for Boundary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Boundary {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pbc" | "periodic" => Ok(Boundary::Periodic),
            "obc" | "open" => Ok(Boundary::Open),
            other => Err(invalid(format!("unknown boundary condition '{other}'"))),
        }
    }
}

/// Amplitude `⟨x| U_F^t |+⟩^{⊗N}` from the dual transfer-matrix product.
pub fn chain_amplitude(
    bits: &[usize],
    t: usize,
    p: &GateParams,
    bc: Boundary,
    b1: f64,
    bn: f64,
) -> Result<C64> {
    let n = bits.len();
    if n == 0 {
        return Err(invalid("empty chain"));
    }
    let tm = coupling_operator(t, p.j)?;
    let dim = 1usize << t;
    let mut acc = CMatrix::identity(dim, dim);
    for (i, &x) in bits.iter().enumerate() {
        let extra = match bc {
            Boundary::Open if n == 1 => b1 + bn,
            Boundary::Open if i == 0 => b1,
            Boundary::Open if i == n - 1 => bn,
            _ => 0.0,
        };
        let l = site_operator(x, t, p, extra)?;
        acc = if i == 0 { scale_rows(&l, &acc) } else { scale_rows(&l, &(&tm * &acc)) };
    }
    Ok(match bc {
        Boundary::Periodic => trace(&(&tm * &acc)),
        Boundary::Open => acc.iter().sum(),
    })
}

/// Index order `(σ, row, col)`: `data[σ]` is the transfer product across the
/// subsystem, with `col` attached to the left bath and `row` to the right.
#[derive(Clone, Debug, PartialEq)]
pub struct WTensor {
    pub n_a: usize,
    pub t_legs: usize,
    data: Tensor,
}

impl WTensor {
    pub fn from_tensor(n_a: usize, t_legs: usize, data: Tensor) -> Result<Self> {
        let want = [1usize << n_a, 1 << t_legs, 1 << t_legs];
        if data.shape() != want {
            return Err(mismatch(format!("W data has shape {:?}, expected {want:?}", data.shape())));
        }
        Ok(Self { n_a, t_legs, data })
    }

    pub fn tensor(&self) -> &Tensor {
        &self.data
    }

    pub fn spatial_dim(&self) -> usize {
        1 << self.n_a
    }

    pub fn temporal_dim(&self) -> usize {
        1 << self.t_legs
    }

    pub fn slice(&self, sigma: usize) -> CMatrix {
        let d = self.temporal_dim();
        CMatrix::from_row_slice(d, d, &self.data.data()[sigma * d * d..(sigma + 1) * d * d])
    }

    pub fn slices(&self) -> Vec<CMatrix> {
        (0..self.spatial_dim()).map(|s| self.slice(s)).collect()
    }

    pub fn scaled(&self, lambda: C64) -> WTensor {
        let mut data = self.data.clone();
        for z in data.data_mut() {
            *z *= lambda;
        }
        WTensor { n_a: self.n_a, t_legs: self.t_legs, data }
    }

    /// Gram matrix `G[σ, σ'] = Σ_{ab} W^σ_{ab} W^{σ'*}_{ab}`.
    pub fn gram(&self) -> CMatrix {
        let ns = self.spatial_dim();
        let d2 = self.temporal_dim() * self.temporal_dim();
        let raw = self.data.data();
        CMatrix::from_fn(ns, ns, |s, u| {
            (0..d2).map(|i| raw[s * d2 + i] * raw[u * d2 + i].conj()).sum()
        })
    }

    /// `(c, defect)` with `c` the mean diagonal of the Gram matrix and
    /// `defect = max |G - c I|`.
    pub fn isometry_defect(&self) -> (f64, f64) {
        let g = self.gram();
        let ns = g.nrows();
        let c = (0..ns).map(|i| g[(i, i)].re).sum::<f64>() / ns as f64;
        let mut worst: f64 = 0.0;
        for i in 0..ns {
            for j in 0..ns {
                let target = if i == j { c } else { 0.0 };
                worst = worst.max((g[(i, j)] - target).norm());
            }
        }
        (c, worst)
    }
}

/// Unnormalized transfer product across `n_a` sites for every spatial
/// outcome `σ` (site `0` of A is the most significant bit of `σ`).
fn region_products(n_a: usize, t: usize, p: &GateParams) -> Result<Vec<CMatrix>> {
    if n_a == 0 {
        return Err(invalid("n_a must be >= 1"));
    }
    temporal_guard(t)?;
    let tm = coupling_operator(t, p.j)?;
    let dim = 1usize << t;
    let l = [site_operator(0, t, p, 0.0)?, site_operator(1, t, p, 0.0)?];
    (0..1usize << n_a)
        .map(|s| {
            let mut acc = CMatrix::identity(dim, dim);
            for i in 0..n_a {
                let x = (s >> (n_a - 1 - i)) & 1;
                acc = if i == 0 { scale_rows(&l[x], &acc) } else { scale_rows(&l[x], &(&tm * &acc)) };
            }
            Ok(acc)
        })
        .collect()
}

/// W' at depth `t`, scaled so that `Tr(W'^{σ†} W'^σ)` averages to `2^{t - t0}`.
pub fn build_wprime(n_a: usize, t: usize, g: f64) -> Result<WTensor> {
    build_wprime_with(n_a, t, &GateParams::self_dual(g))
}

pub fn build_wprime_with(n_a: usize, t: usize, p: &GateParams) -> Result<WTensor> {
    let t0 = t0(n_a);
    if t < t0 {
        return Err(invalid(format!("t = {t} is below the minimal depth {t0} for n_a = {n_a}")));
    }
    if n_a > 6 {
        return Err(invalid("n_a > 6 is outside the dense W construction"));
    }
    let mats = region_products(n_a, t, p)?;
    let dim = 1usize << t;
    let mut data = Vec::with_capacity(mats.len() * dim * dim);
    for m in &mats {
        for i in 0..dim {
            for j in 0..dim {
                data.push(m[(i, j)]);
            }
        }
    }
    let norm2: f64 = data.iter().map(|z| z.norm_sqr()).sum::<f64>() / mats.len() as f64;
    if !(norm2 > 0.0) {
        return Err(numerical("W' vanishes identically"));
    }
    let scale = ((1u64 << (t - t0)) as f64 / norm2).sqrt();
    for z in &mut data {
        *z *= scale;
    }
    WTensor::from_tensor(n_a, t, Tensor::new(vec![1 << n_a, dim, dim], data)?)
}

/// W at the minimal depth `⌈n_a/2⌉`, checked to be an isometry.
pub fn build_w(n_a: usize, g: f64) -> Result<WTensor> {
    let w = build_wprime(n_a, t0(n_a), g)?;
    let (c, defect) = w.isometry_defect();
    if defect > 1e-8 || (c - 1.0).abs() > 1e-8 {
        return Err(numerical(format!("W is not isometric: c = {c}, defect = {defect:e}")));
    }
    Ok(w)
}

/// Partial trace of a `t`-qubit temporal operator over its last `t - t0`
/// qubits, so that `Tr(W^σ reduce(U)) = Tr((W^σ ⊗ I) U)`.
pub fn reduce_temporal_operator(u: &CMatrix, t: usize, t0: usize) -> Result<CMatrix> {
    if t < t0 {
        return Err(invalid("t must be at least t0"));
    }
    let dim = 1usize << t;
    if u.nrows() != dim || u.ncols() != dim {
        return Err(mismatch(format!("operator is {}x{}, expected {dim}x{dim}", u.nrows(), u.ncols())));
    }
    if t == t0 {
        return Ok(u.clone());
    }
    partial_trace(u, &[1 << t0, 1 << (t - t0)], &[0])
}

/// Temporal map of one bath side, `Π_i T̂ L̂(z_i)` with the first bit applied
/// first. The rescalings `T̂ = 2^{-t/2} T`, `L̂ = 2^{(t+1)/2} L` make it unitary
/// in the self-dual case.
pub fn bath_map(bits: &[usize], t: usize, p: &GateParams) -> Result<CMatrix> {
    let dim = 1usize << t;
    let tm = coupling_operator(t, p.j)? * c64((dim as f64).sqrt().recip(), 0.0);
    let lscale = (2.0 * dim as f64).sqrt();
    let mut acc = CMatrix::identity(dim, dim);
    for &x in bits {
        let l: Vec<C64> = site_operator(x, t, p, 0.0)?.iter().map(|z| z * lscale).collect();
        acc = &tm * scale_rows(&l, &acc);
    }
    Ok(acc)
}

/// As `bath_map`, additionally checking unitarity.
pub fn bath_unitary(bits: &[usize], t: usize, p: &GateParams) -> Result<CMatrix> {
    let u = bath_map(bits, t, p)?;
    let defect = unitarity_defect(&u);
    if defect > 1e-8 {
        return Err(numerical(format!("bath map for {bits:?} is not unitary (defect {defect:e})")));
    }
    Ok(u)
}

/// `⟨P(τ)| (W ⊗ W*)^{⊗m} |P(σ)⟩` with spatial labels `μ_r` on the `W` and
/// `ν_r` on the `W*` of copy `r`. Evaluated as a product of traces, one per
/// cycle of `τ σ⁻¹`.
pub fn diagram_value(
    w: &[CMatrix],
    sigma: &Permutation,
    tau: &Permutation,
    mu: &[usize],
    nu: &[usize],
) -> Result<C64> {
    let m = sigma.degree();
    if tau.degree() != m || mu.len() != m || nu.len() != m {
        return Err(mismatch("diagram legs do not match the permutation degree"));
    }
    let dim = w[0].nrows();
    let si = sigma.inverse();
    let mut done = vec![false; m];
    let mut val = c64(1.0, 0.0);
    for start in 0..m {
        if done[start] {
            continue;
        }
        let mut acc = CMatrix::identity(dim, dim);
        let mut s = start;
        while !done[s] {
            done[s] = true;
            let r = si.apply(s);
            acc = acc * w[nu[s]].conjugate() * w[mu[r]].transpose();
            s = tau.apply(r);
        }
        val *= trace(&acc);
    }
    Ok(val)
}

const DUMP_MAGIC: &[u8; 4] = b"WTNS";
const DUMP_VERSION: u32 = 1;

/// Write `magic "WTNS" | u32 version | u32 rank | u64 dims... | (f32 re, f32 im)...`,
/// all little-endian.
pub fn write_w_dump<W: Write>(w: &WTensor, mut out: W) -> std::io::Result<()> {
    out.write_all(DUMP_MAGIC)?;
    out.write_all(&DUMP_VERSION.to_le_bytes())?;
    let shape = w.tensor().shape();
    out.write_all(&(shape.len() as u32).to_le_bytes())?;
    for &d in shape {
        out.write_all(&(d as u64).to_le_bytes())?;
    }
    for z in w.tensor().data() {
        out.write_all(&(z.re as f32).to_le_bytes())?;
        out.write_all(&(z.im as f32).to_le_bytes())?;
    }
    Ok(())
}

pub fn read_w_dump<R: Read>(mut input: R) -> Result<WTensor> {
    let io = |e: std::io::Error| invalid(format!("W dump: {e}"));
    let mut word = [0u8; 4];
    input.read_exact(&mut word).map_err(io)?;
    if &word != DUMP_MAGIC {
        return Err(invalid("W dump: bad magic"));
    }
    input.read_exact(&mut word).map_err(io)?;
    if u32::from_le_bytes(word) != DUMP_VERSION {
        return Err(invalid("W dump: unsupported version"));
    }
    input.read_exact(&mut word).map_err(io)?;
    let rank = u32::from_le_bytes(word) as usize;
    if rank != 3 {
        return Err(invalid("W dump: rank must be 3"));
    }
    let mut shape = Vec::with_capacity(rank);
    let mut long = [0u8; 8];
    for _ in 0..rank {
        input.read_exact(&mut long).map_err(io)?;
        shape.push(u64::from_le_bytes(long) as usize);
    }
    let (ns, dt) = (shape[0], shape[1]);
    if !ns.is_power_of_two() || !dt.is_power_of_two() || shape[2] != dt || dt > 1 << MAX_TEMPORAL_QUBITS {
        return Err(invalid(format!("W dump: bad shape {shape:?}")));
    }
    let len = ns * dt * dt;
    let mut data = Vec::with_capacity(len);
    for _ in 0..len {
        input.read_exact(&mut word).map_err(io)?;
        let re = f32::from_le_bytes(word);
        input.read_exact(&mut word).map_err(io)?;
        let im = f32::from_le_bytes(word);
        data.push(c64(re as f64, im as f64));
    }
    WTensor::from_tensor(
        ns.trailing_zeros() as usize,
        dt.trailing_zeros() as usize,
        Tensor::new(shape, data)?,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hadamard_squares_to_identity() {
        let e = elementary_tensors(0.3);
        let h2 = &e.hadamard * &e.hadamard;
        assert!((h2 - CMatrix::identity(2, 2)).norm() < 1e-15);
    }

    #[test]
    fn delta3_without_field_is_kronecker() {
        let e = elementary_tensors(0.0);
        for a in 0..2 {
            for b in 0..2 {
                for c in 0..2 {
                    let want = if a == b && b == c { 1.0 } else { 0.0 };
                    assert_eq!(e.delta3.get(&[a, b, c]), c64(want, 0.0));
                }
            }
        }
    }

    #[test]
    fn delta3_fusion_doubles_phase() {
        let g = 0.37;
        let d = elementary_tensors(g).delta3;
        let d2 = elementary_tensors(2.0 * g).delta3;
        // Σ_x δ(z1,z2,x) δ(x,z3,y), with y absorbed by √2⟨+|
        for z1 in 0..2 {
            for z2 in 0..2 {
                for z3 in 0..2 {
                    let mut v = c64(0.0, 0.0);
                    for x in 0..2 {
                        for y in 0..2 {
                            v += d.get(&[z1, z2, x]) * d.get(&[x, z3, y]);
                        }
                    }
                    assert!((v - d2.get(&[z1, z2, z3])).norm() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn w_shapes_and_isometry() {
        let w = build_w(2, 0.3).unwrap();
        assert_eq!(w.tensor().shape(), &[4, 2, 2]);
        for n_a in 1..=4 {
            let w = build_w(n_a, 0.3).unwrap();
            let (c, defect) = w.isometry_defect();
            assert!((c - 1.0).abs() < 1e-12 && defect < 1e-12, "n_a={n_a}: c={c} defect={defect}");
        }
    }

    #[test]
    fn wprime_shape() {
        let w = build_wprime(3, 4, 0.3).unwrap();
        assert_eq!(w.tensor().shape(), &[8, 16, 16]);
        assert!(build_wprime(3, 1, 0.3).is_err());
    }

    #[test]
    fn reduce_identity_and_product() {
        let r = reduce_temporal_operator(&CMatrix::identity(8, 8), 3, 1).unwrap();
        assert!((r - CMatrix::identity(2, 2) * c64(4.0, 0.0)).norm() < 1e-15);
        let a = CMatrix::from_fn(2, 2, |i, j| c64(i as f64 + 1.0, j as f64));
        let b = CMatrix::from_fn(4, 4, |i, j| c64((i * j) as f64, 1.0));
        let r = reduce_temporal_operator(&a.kronecker(&b), 3, 1).unwrap();
        assert!((r - &a * trace(&b)).norm() < 1e-12);
        let same = reduce_temporal_operator(&b, 2, 2).unwrap();
        assert_eq!(same, b);
    }

    #[test]
    fn bath_maps_are_unitary() {
        let p = GateParams::self_dual(0.3);
        for t in 1..=4 {
            for bits in [vec![0], vec![1, 0, 1], vec![1, 1, 0, 0, 1]] {
                bath_unitary(&bits, t, &p).unwrap();
            }
        }
    }

    #[test]
    fn generic_kick_breaks_unitarity() {
        let p = GateParams { j: 0.5, h: 0.9, g: 0.3 };
        assert!(bath_unitary(&[0, 1, 1], 2, &p).is_err());
    }

    #[test]
    fn dump_roundtrip() {
        let w = build_w(2, 0.3).unwrap();
        let mut buf = Vec::new();
        write_w_dump(&w, &mut buf).unwrap();
        assert_eq!(buf.len(), 4 + 4 + 4 + 3 * 8 + 16 * 8);
        let back = read_w_dump(buf.as_slice()).unwrap();
        for (a, b) in back.tensor().data().iter().zip(w.tensor().data()) {
            assert!((a - b).norm() < 1e-7);
        }
        assert!(read_w_dump(&b"XXXX"[..]).is_err());
    }
}

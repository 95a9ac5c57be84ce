//! Dense complex linear algebra with one fixed index convention.
//!
//! * Qubit 0 is the most significant bit of a register index.
//! * In a multi-copy register, copy 0 is the slowest-varying block.
//! * Vectorized operators interleave `(ket, bra)` per copy, so `vec(A)` of a
//!   single-copy matrix is its row-major flattening.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{invalid, mismatch, numerical, Error, Result};
use crate::permgroup::{enumerate_sym, Permutation};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Dense operators on more qubits than this are refused.
/// 2^12 x 2^12 complex doubles is 256 MiB.
pub const MAX_DENSE_QUBITS: usize = 12;

/// Inputs within this distance of Hermitian go through the eigen route.
pub const HERMITIAN_TOL: f64 = 1e-8;

#[inline]
pub fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub(crate) fn dense_guard(qubits: usize, what: &str) -> Result<()> {
    if qubits > MAX_DENSE_QUBITS {
        let dim = 1u128 << qubits;
        return Err(Error::Infeasible {
            what: what.to_string(),
            bytes: dim * dim * 16,
            limit: (1u128 << (2 * MAX_DENSE_QUBITS)) * 16,
        });
    }
    Ok(())
}

/// Row-major complex array, axis 0 slowest.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<C64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<C64>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(mismatch(format!(
                "shape {shape:?} holds {len} elements, data has {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self { shape, data: vec![C64::new(0.0, 0.0); len] }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != self.data.len() {
            return Err(mismatch(format!("cannot reshape {:?} to {shape:?}", self.shape)));
        }
        self.shape = shape;
        Ok(self)
    }

    fn offset(&self, idx: &[usize]) -> usize {
        assert_eq!(idx.len(), self.shape.len(), "index rank");
        idx.iter().zip(&self.shape).fold(0, |acc, (&i, &n)| {
            assert!(i < n, "index out of bounds");
            acc * n + i
        })
    }

    pub fn get(&self, idx: &[usize]) -> C64 {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: C64) {
        let o = self.offset(idx);
        self.data[o] = v;
    }

    /// New tensor whose axis `i` is axis `axes[i]` of `self`.
    pub fn permute_axes(&self, axes: &[usize]) -> Result<Self> {
        let r = self.shape.len();
        let mut seen = vec![false; r];
        if axes.len() != r || axes.iter().any(|&a| a >= r || std::mem::replace(&mut seen[a], true)) {
            return Err(invalid(format!("{axes:?} is not an axis permutation of rank {r}")));
        }
        let mut strides = vec![1usize; r];
        for i in (0..r.saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.shape[i + 1];
        }
        let new_shape: Vec<usize> = axes.iter().map(|&a| self.shape[a]).collect();
        let new_strides: Vec<usize> = axes.iter().map(|&a| strides[a]).collect();
        let mut out = Vec::with_capacity(self.data.len());
        let mut idx = vec![0usize; r];
        let mut src = 0usize;
        for _ in 0..self.data.len() {
            out.push(self.data[src]);
            for ax in (0..r).rev() {
                idx[ax] += 1;
                src += new_strides[ax];
                if idx[ax] < new_shape[ax] {
                    break;
                }
                src -= new_strides[ax] * new_shape[ax];
                idx[ax] = 0;
            }
        }
        Ok(Self { shape: new_shape, data: out })
    }

    /// View a rank-2 tensor as a matrix.
    pub fn to_matrix(&self) -> Result<CMatrix> {
        if self.shape.len() != 2 {
            return Err(mismatch(format!("rank {} tensor is not a matrix", self.shape.len())));
        }
        Ok(CMatrix::from_row_slice(self.shape[0], self.shape[1], &self.data))
    }

    pub fn from_matrix(m: &CMatrix) -> Self {
        let (r, c) = m.shape();
        let mut data = Vec::with_capacity(r * c);
        for i in 0..r {
            for j in 0..c {
                data.push(m[(i, j)]);
            }
        }
        Self { shape: vec![r, c], data }
    }
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn kron_all(factors: &[CMatrix]) -> CMatrix {
    let mut it = factors.iter();
    let first = it.next().expect("kron_all of nothing").clone();
    it.fold(first, |acc, f| acc.kronecker(f))
}

pub fn kron_vec(a: &[C64], b: &[C64]) -> Vec<C64> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for &x in a {
        for &y in b {
            out.push(x * y);
        }
    }
    out
}

pub fn identity(d: usize) -> CMatrix {
    CMatrix::identity(d, d)
}

pub fn hermitian_defect(a: &CMatrix) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..a.nrows() {
        for j in i..a.ncols() {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn unitarity_defect(u: &CMatrix) -> f64 {
    let d = u.nrows();
    let g = u.adjoint() * u;
    let mut worst: f64 = 0.0;
    for i in 0..d {
        for j in 0..d {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).norm());
        }
    }
    worst
}

fn finite(a: &CMatrix) -> Result<()> {
    if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(numerical("non-finite matrix entry"));
    }
    Ok(())
}

/// Eigenvalues of a Hermitian matrix (the strictly lower triangle is ignored
/// after symmetrization).
pub fn hermitian_eigenvalues(a: &CMatrix) -> Result<Vec<f64>> {
    if !a.is_square() {
        return Err(mismatch("eigenvalues of a non-square matrix"));
    }
    finite(a)?;
    let h = (a + a.adjoint()) * c64(0.5, 0.0);
    let ev = h.symmetric_eigenvalues();
    Ok(ev.iter().copied().collect())
}

/// Sum of singular values.
pub fn trace_norm(a: &CMatrix) -> Result<f64> {
    if !a.is_square() {
        return Err(mismatch(format!("trace norm of {}x{} matrix", a.nrows(), a.ncols())));
    }
    finite(a)?;
    if a.nrows() == 0 {
        return Ok(0.0);
    }
    if hermitian_defect(a) <= HERMITIAN_TOL {
        Ok(hermitian_eigenvalues(a)?.iter().map(|x| x.abs()).sum())
    } else {
        Ok(a.clone().singular_values().iter().sum())
    }
}

/// Partial trace of an operator on `⊗_i C^{dims[i]}`, keeping the listed
/// subsystems in their original order.
pub fn partial_trace(a: &CMatrix, dims: &[usize], keep: &[usize]) -> Result<CMatrix> {
    let total: usize = dims.iter().product();
    if a.nrows() != total || a.ncols() != total {
        return Err(mismatch(format!(
            "operator is {}x{}, subsystems {dims:?} need {total}",
            a.nrows(),
            a.ncols()
        )));
    }
    if keep.windows(2).any(|w| w[0] >= w[1]) || keep.iter().any(|&k| k >= dims.len()) {
        return Err(invalid(format!("keep list {keep:?} must be increasing and < {}", dims.len())));
    }
    let n = dims.len();
    let mut strides = vec![1usize; n];
    for i in (0..n.saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * dims[i + 1];
    }
    let traced: Vec<usize> = (0..n).filter(|i| !keep.contains(i)).collect();
    let embed = |axes: &[usize]| -> Vec<usize> {
        let size: usize = axes.iter().map(|&i| dims[i]).product();
        (0..size)
            .map(|mut x| {
                let mut off = 0;
                for &ax in axes.iter().rev() {
                    off += (x % dims[ax]) * strides[ax];
                    x /= dims[ax];
                }
                off
            })
            .collect()
    };
    let kept_off = embed(keep);
    let traced_off = embed(&traced);
    let dk = kept_off.len();
    Ok(CMatrix::from_fn(dk, dk, |i, j| {
        traced_off
            .iter()
            .map(|&r| a[(kept_off[i] + r, kept_off[j] + r)])
            .sum()
    }))
}

pub fn trace(a: &CMatrix) -> C64 {
    a.diagonal().iter().sum()
}

/// Vectorized permutation operator, `|i_1 i_{σ(1)} i_2 i_{σ(2)} ...⟩`
/// summed over all `i` in `(2^q)^m`.
pub fn permutation_vector_state(p: &Permutation, q: usize, m: usize) -> Result<CVector> {
    if p.degree() != m {
        return Err(mismatch(format!("permutation of degree {} for {m} copies", p.degree())));
    }
    if 2 * q * m > 2 * MAX_DENSE_QUBITS {
        return Err(Error::Infeasible {
            what: "permutation vector".into(),
            bytes: (1u128 << (2 * q * m)) * 16,
            limit: (1u128 << (2 * MAX_DENSE_QUBITS)) * 16,
        });
    }
    let d = 1usize << q;
    let dm = d.pow(m as u32);
    let mut v = CVector::zeros(dm * dm);
    let mut digits = vec![0usize; m];
    for flat in 0..dm {
        let mut x = flat;
        for r in (0..m).rev() {
            digits[r] = x % d;
            x /= d;
        }
        let mut idx = 0;
        for r in 0..m {
            idx = (idx * d + digits[r]) * d + digits[p.apply(r)];
        }
        v[idx] = c64(1.0, 0.0);
    }
    Ok(v)
}

/// Operator whose interleaved vectorization is `permutation_vector_state`.
/// It moves the tensor factor in copy `r` to copy `p(r)`, and
/// `O(σ) O(τ) = O(σ ∘ τ)`.
pub fn permutation_operator(p: &Permutation, q: usize) -> Result<CMatrix> {
    let m = p.degree();
    dense_guard(q * m, "permutation operator")?;
    let d = 1usize << q;
    let dm = d.pow(m as u32);
    let mut o = CMatrix::zeros(dm, dm);
    let mut digits = vec![0usize; m];
    for col in 0..dm {
        let mut x = col;
        for r in (0..m).rev() {
            digits[r] = x % d;
            x /= d;
        }
        // ket slot p(r) receives the bra digit of slot r
        let mut moved = vec![0usize; m];
        for r in 0..m {
            moved[p.apply(r)] = digits[r];
        }
        let row = moved.iter().fold(0, |acc, &v| acc * d + v);
        o[(row, col)] = c64(1.0, 0.0);
    }
    Ok(o)
}

/// Interleaved vectorization of an operator on `m` copies of dimension `d`.
pub fn vectorize_interleaved(a: &CMatrix, d: usize, m: usize) -> Result<CVector> {
    let dm = d.pow(m as u32);
    if a.nrows() != dm || a.ncols() != dm {
        return Err(mismatch("operator size does not match copies"));
    }
    let mut v = CVector::zeros(dm * dm);
    let mut ki = vec![0usize; m];
    let mut bi = vec![0usize; m];
    for row in 0..dm {
        let mut x = row;
        for r in (0..m).rev() {
            ki[r] = x % d;
            x /= d;
        }
        for col in 0..dm {
            let mut y = col;
            for r in (0..m).rev() {
                bi[r] = y % d;
                y /= d;
            }
            let idx = (0..m).fold(0, |acc, r| (acc * d + ki[r]) * d + bi[r]);
            v[idx] = a[(row, col)];
        }
    }
    Ok(v)
}

/// `‖(V⊗V*)^{⊗m}|P_q(p)⟩ − |P_q(p)⟩‖`.
pub fn unitary_conjugation_invariance_check(v: &CMatrix, p: &Permutation, m: usize) -> Result<f64> {
    if !v.is_square() || !v.nrows().is_power_of_two() {
        return Err(mismatch("V must be square with power-of-two dimension"));
    }
    let q = v.nrows().trailing_zeros() as usize;
    if p.degree() != m {
        return Err(mismatch("permutation degree differs from copy count"));
    }
    let ud = unitarity_defect(v);
    if ud > 1e-8 {
        return Err(invalid(format!("V is not unitary (defect {ud:e})")));
    }
    let o = permutation_operator(p, q)?;
    let vm = kron_all(&vec![v.clone(); m]);
    let rotated = &vm * &o * vm.adjoint();
    let a = vectorize_interleaved(&rotated, 1 << q, m)?;
    let b = permutation_vector_state(p, q, m)?;
    Ok((a - b).norm())
}

/// k-fold replicated density-like operator on `n_a` qubits per copy.
#[derive(Clone, Debug)]
pub struct MomentOperator {
    pub k: usize,
    pub n_a: usize,
    pub matrix: CMatrix,
}

#[derive(Clone, Copy, Debug)]
pub struct MomentDiagnostics {
    pub hermitian_defect: f64,
    pub trace_error: f64,
    pub min_eigenvalue: f64,
}

impl MomentOperator {
    pub fn new(k: usize, n_a: usize, matrix: CMatrix) -> Result<Self> {
        let dim = 1usize << (n_a * k);
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(mismatch(format!(
                "moment operator for k={k}, n_a={n_a} must be {dim}x{dim}"
            )));
        }
        Ok(Self { k, n_a, matrix })
    }

    /// Rescale to unit trace.
    pub fn normalized(k: usize, n_a: usize, matrix: CMatrix) -> Result<Self> {
        let tr = trace(&matrix);
        if !(tr.re > 0.0) || !tr.re.is_finite() {
            return Err(numerical(format!("trace {tr} cannot be normalized")));
        }
        Self::new(k, n_a, matrix.map(|z| z / tr.re))
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn diagnostics(&self) -> Result<MomentDiagnostics> {
        let ev = hermitian_eigenvalues(&self.matrix)?;
        Ok(MomentDiagnostics {
            hermitian_defect: hermitian_defect(&self.matrix),
            trace_error: (trace(&self.matrix) - c64(1.0, 0.0)).norm(),
            min_eigenvalue: ev.iter().copied().fold(f64::INFINITY, f64::min),
        })
    }

    /// Hermitian, unit trace and PSD up to `tol`.
    pub fn validate(&self, tol: f64) -> Result<()> {
        let d = self.diagnostics()?;
        if d.hermitian_defect > tol || d.trace_error > tol || d.min_eigenvalue < -tol {
            return Err(numerical(format!("moment operator fails validation: {d:?}")));
        }
        Ok(())
    }

    /// Trace out the last replica.
    pub fn reduce_last(&self) -> Result<MomentOperator> {
        if self.k < 2 {
            return Err(invalid("cannot reduce a k=1 moment operator"));
        }
        let d = 1usize << self.n_a;
        let dims = vec![d; self.k];
        let keep: Vec<usize> = (0..self.k - 1).collect();
        MomentOperator::new(self.k - 1, self.n_a, partial_trace(&self.matrix, &dims, &keep)?)
    }

    /// `O(π) ρ O(π)†` for a permutation of the replicas.
    pub fn permute_replicas(&self, p: &Permutation) -> Result<MomentOperator> {
        if p.degree() != self.k {
            return Err(mismatch("replica permutation degree"));
        }
        let o = permutation_operator(p, self.n_a)?;
        MomentOperator::new(self.k, self.n_a, &o * &self.matrix * o.transpose())
    }
}

/// `Σ_{σ∈S_k} O(σ) / (d(d+1)...(d+k-1))`, `d = 2^{n_a}`.
pub fn haar_moment_operator(n_a: usize, k: usize) -> Result<MomentOperator> {
    if k == 0 || n_a == 0 {
        return Err(invalid("haar moment needs n_a >= 1 and k >= 1"));
    }
    dense_guard(n_a * k, "Haar moment operator")?;
    let d = (1usize << n_a) as f64;
    let norm: f64 = (0..k).map(|i| d + i as f64).product();
    let dim = 1usize << (n_a * k);
    let mut acc = CMatrix::zeros(dim, dim);
    for p in enumerate_sym(k)? {
        acc += permutation_operator(&p, n_a)?;
    }
    MomentOperator::new(k, n_a, acc.map(|z| z / norm))
}

/// Von Neumann entropy in bits.
pub fn von_neumann_entropy_bits(rho: &CMatrix) -> Result<f64> {
    let ev = hermitian_eigenvalues(rho)?;
    Ok(ev
        .iter()
        .filter(|&&x| x > 1e-15)
        .map(|&x| -x * x.log2())
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn real_diag(v: &[f64]) -> CMatrix {
        CMatrix::from_diagonal(&CVector::from_iterator(v.len(), v.iter().map(|&x| c64(x, 0.0))))
    }

    #[test]
    fn trace_norm_basics() {
        assert!((trace_norm(&real_diag(&[3.0, -4.0])).unwrap() - 7.0).abs() < 1e-14);
        assert_eq!(trace_norm(&CMatrix::zeros(3, 3)).unwrap(), 0.0);
        assert!((trace_norm(&identity(5)).unwrap() - 5.0).abs() < 1e-14);
        let mut bad = identity(2);
        bad[(0, 1)] = c64(f64::NAN, 0.0);
        assert!(trace_norm(&bad).is_err());
        assert!(trace_norm(&CMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn trace_norm_non_hermitian() {
        // nilpotent Jordan block has singular values (1, 0)
        let mut a = CMatrix::zeros(2, 2);
        a[(0, 1)] = c64(1.0, 0.0);
        assert!((trace_norm(&a).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn bell_partial_trace() {
        let s = 0.5f64.sqrt();
        let psi = CVector::from_vec(vec![c64(s, 0.0), c64(0.0, 0.0), c64(0.0, 0.0), c64(s, 0.0)]);
        let rho = &psi * psi.adjoint();
        let r = partial_trace(&rho, &[2, 2], &[0]).unwrap();
        assert!((r - identity(2) * c64(0.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn product_partial_trace() {
        let a = CMatrix::from_fn(2, 2, |i, j| c64((i + 2 * j) as f64, i as f64));
        let b = CMatrix::from_fn(3, 3, |i, j| c64(1.0 + (i * j) as f64, -(j as f64)));
        let ab = kron(&a, &b);
        let ra = partial_trace(&ab, &[2, 3], &[0]).unwrap();
        assert!((ra - &a * trace(&b)).norm() < 1e-12);
        let rb = partial_trace(&ab, &[2, 3], &[1]).unwrap();
        assert!((rb - &b * trace(&a)).norm() < 1e-12);
        assert!(partial_trace(&ab, &[2, 2], &[0]).is_err());
    }

    #[test]
    fn permutation_vector_examples() {
        let v = permutation_vector_state(&Permutation::identity(1), 1, 1).unwrap();
        let re: Vec<f64> = v.iter().map(|z| z.re).collect();
        assert_eq!(re, vec![1.0, 0.0, 0.0, 1.0]);
        let e = permutation_vector_state(&Permutation::identity(2), 1, 2).unwrap();
        let sw = permutation_vector_state(&Permutation::transposition(2, 0, 1).unwrap(), 1, 2).unwrap();
        assert!((e.dotc(&sw).re - 2.0).abs() < 1e-14);
        let e3 = permutation_vector_state(&Permutation::identity(3), 2, 3).unwrap();
        let c3 = permutation_vector_state(&Permutation::new(vec![1, 2, 0]).unwrap(), 2, 3).unwrap();
        assert!((e3.dotc(&c3).re - 4.0).abs() < 1e-14);
    }

    #[test]
    fn operator_matches_vector() {
        for p in enumerate_sym(3).unwrap() {
            let o = permutation_operator(&p, 1).unwrap();
            let v = vectorize_interleaved(&o, 2, 3).unwrap();
            assert_eq!(v, permutation_vector_state(&p, 1, 3).unwrap());
        }
    }

    #[test]
    fn ket_side_action_composes() {
        // O(π) on the ket side of |P(σ)⟩ gives |P(π∘σ)⟩
        let perms = enumerate_sym(3).unwrap();
        for s in &perms {
            for p in &perms {
                let lhs = permutation_operator(p, 1).unwrap() * permutation_operator(s, 1).unwrap();
                let rhs = permutation_operator(&p.compose(s), 1).unwrap();
                assert_eq!(lhs, rhs);
            }
        }
    }

    #[test]
    fn invariance_identity_and_hadamard() {
        let p = Permutation::identity(1);
        assert_eq!(unitary_conjugation_invariance_check(&identity(2), &p, 1).unwrap(), 0.0);
        let s = 0.5f64.sqrt();
        let h = CMatrix::from_row_slice(2, 2, &[c64(s, 0.0), c64(s, 0.0), c64(s, 0.0), c64(-s, 0.0)]);
        assert!(unitary_conjugation_invariance_check(&h, &p, 1).unwrap() <= 1e-12);
        let mut bad = identity(2);
        bad[(0, 0)] = c64(2.0, 0.0);
        assert!(unitary_conjugation_invariance_check(&bad, &p, 1).is_err());
    }

    #[test]
    fn haar_moment_small() {
        let h1 = haar_moment_operator(2, 1).unwrap();
        assert!((h1.matrix - identity(4) * c64(0.25, 0.0)).norm() < 1e-15);
        let h2 = haar_moment_operator(1, 2).unwrap();
        let swap = permutation_operator(&Permutation::transposition(2, 0, 1).unwrap(), 1).unwrap();
        let expect = (identity(4) + swap) * c64(1.0 / 6.0, 0.0);
        assert!((h2.matrix - expect).norm() < 1e-15);
        let h22 = haar_moment_operator(2, 2).unwrap();
        h22.validate(1e-12).unwrap();
        let rank = hermitian_eigenvalues(&h22.matrix).unwrap().iter().filter(|&&x| x > 1e-10).count();
        assert_eq!(rank, 10);
    }

    #[test]
    fn haar_reduction() {
        for (n_a, k) in [(1, 2), (1, 3), (2, 2), (2, 3), (1, 4)] {
            let hk = haar_moment_operator(n_a, k).unwrap();
            let hk1 = haar_moment_operator(n_a, k - 1).unwrap();
            assert!((hk.reduce_last().unwrap().matrix - hk1.matrix).norm() < 1e-12);
        }
    }

    #[test]
    fn tensor_permute_roundtrip() {
        let data: Vec<C64> = (0..24).map(|i| c64(i as f64, 0.0)).collect();
        let t = Tensor::new(vec![2, 3, 4], data).unwrap();
        let p = t.permute_axes(&[2, 0, 1]).unwrap();
        assert_eq!(p.shape(), &[4, 2, 3]);
        assert_eq!(p.get(&[3, 1, 2]), t.get(&[1, 2, 3]));
        let back = p.permute_axes(&[1, 2, 0]).unwrap();
        assert_eq!(back, t);
        assert!(t.clone().reshape(vec![6, 5]).is_err());
        assert!(t.permute_axes(&[0, 0, 1]).is_err());
    }

    #[test]
    fn entropy_examples() {
        assert!(von_neumann_entropy_bits(&real_diag(&[1.0, 0.0])).unwrap().abs() < 1e-14);
        assert!((von_neumann_entropy_bits(&real_diag(&[0.5, 0.5])).unwrap() - 1.0).abs() < 1e-14);
    }
}

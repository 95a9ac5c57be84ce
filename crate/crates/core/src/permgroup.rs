//! Symmetric groups, cycle structure and Weingarten tables.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, numerical, Error, Result};

/// Largest supported degree. 8! = 40320 elements.
pub const MAX_DEGREE: usize = 8;

/// Degrees up to this value invert the full m! x m! Gram matrix.
/// Above it the same linear system is solved on class functions only.
pub const DIRECT_GRAM_MAX: usize = 6;

/// Condition numbers above this are reported as an error.
pub const MAX_CONDITION: f64 = 1e12;

/// A permutation of `{0, .., m-1}` in one-line form: `p(i) = images[i]`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Permutation {
    images: Vec<usize>,
}

impl Permutation {
    pub fn new(images: Vec<usize>) -> Result<Self> {
        let m = images.len();
        if m == 0 {
            return Err(invalid("permutation of degree 0"));
        }
        let mut seen = vec![false; m];
        for &x in &images {
            if x >= m || seen[x] {
                return Err(invalid(format!("{images:?} is not a bijection on 0..{m}")));
            }
            seen[x] = true;
        }
        Ok(Self { images })
    }

    pub fn identity(m: usize) -> Self {
        Self { images: (0..m).collect() }
    }

    /// Swap of `a` and `b` in `S_m`.
    pub fn transposition(m: usize, a: usize, b: usize) -> Result<Self> {
        if a >= m || b >= m || a == b {
            return Err(invalid(format!("bad transposition ({a} {b}) in S_{m}")));
        }
        let mut images: Vec<usize> = (0..m).collect();
        images.swap(a, b);
        Ok(Self { images })
    }

    pub fn degree(&self) -> usize {
        self.images.len()
    }

    pub fn images(&self) -> &[usize] {
        &self.images
    }

    #[inline]
    pub fn apply(&self, i: usize) -> usize {
        self.images[i]
    }

    pub fn is_identity(&self) -> bool {
        self.images.iter().enumerate().all(|(i, &x)| i == x)
    }

    /// `(self ∘ other)(i) = self(other(i))`.
    pub fn compose(&self, other: &Permutation) -> Permutation {
        assert_eq!(self.degree(), other.degree(), "degree mismatch in compose");
        Permutation {
            images: other.images.iter().map(|&i| self.images[i]).collect(),
        }
    }

    pub fn inverse(&self) -> Permutation {
        let mut inv = vec![0; self.degree()];
        for (i, &x) in self.images.iter().enumerate() {
            inv[x] = i;
        }
        Permutation { images: inv }
    }

    /// Number of disjoint cycles, fixed points included.
    pub fn cycle_count(&self) -> usize {
        cycle_count_slice(&self.images)
    }

    /// Cycle lengths sorted in decreasing order.
    pub fn cycle_type(&self) -> CycleType {
        let m = self.degree();
        let mut seen = vec![false; m];
        let mut parts = Vec::new();
        for start in 0..m {
            if seen[start] {
                continue;
            }
            let mut len = 0;
            let mut j = start;
            while !seen[j] {
                seen[j] = true;
                j = self.images[j];
                len += 1;
            }
            parts.push(len);
        }
        parts.sort_unstable_by(|a, b| b.cmp(a));
        CycleType(parts)
    }

    /// Position in the lexicographic listing of `S_m` (Lehmer code).
    pub fn rank(&self) -> usize {
        let m = self.degree();
        let mut rank = 0;
        for i in 0..m {
            let smaller = self.images[i + 1..]
                .iter()
                .filter(|&&x| x < self.images[i])
                .count();
            rank = rank * (m - i) + smaller;
        }
        rank
    }

    pub fn from_rank(m: usize, mut rank: usize) -> Result<Self> {
        if m == 0 || m > 20 || rank >= factorial(m) {
            return Err(invalid(format!("rank {rank} out of range for S_{m}")));
        }
        let mut pool: Vec<usize> = (0..m).collect();
        let mut images = Vec::with_capacity(m);
        for i in 0..m {
            let f = factorial(m - 1 - i);
            images.push(pool.remove(rank / f));
            rank %= f;
        }
        Ok(Self { images })
    }
}

impl fmt::Debug for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Permutation{:?}", self.images)
    }
}

/// Cycle count of a one-line permutation given as a raw slice.
pub fn cycle_count_slice(images: &[usize]) -> usize {
    let m = images.len();
    debug_assert!(m <= 64);
    let mut seen: u64 = 0;
    let mut count = 0;
    for start in 0..m {
        if seen >> start & 1 == 1 {
            continue;
        }
        count += 1;
        let mut j = start;
        while seen >> j & 1 == 0 {
            seen |= 1 << j;
            j = images[j];
        }
    }
    count
}

/// A partition of `m` listing cycle lengths in decreasing order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CycleType(pub Vec<usize>);

impl fmt::Display for CycleType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|p| p.to_string()).collect();
        f.write_str(&parts.join("+"))
    }
}

impl CycleType {
    pub fn cycle_count(&self) -> usize {
        self.0.len()
    }
}

pub fn factorial(m: usize) -> usize {
    (1..=m).product()
}

fn check_degree(m: usize) -> Result<()> {
    if m == 0 || m > MAX_DEGREE {
        return Err(invalid(format!("degree {m} outside 1..={MAX_DEGREE}")));
    }
    Ok(())
}

/// All of `S_m` in lexicographic order, so that `perms[p.rank()] == p`.
pub fn enumerate_sym(m: usize) -> Result<Vec<Permutation>> {
    check_degree(m)?;
    let mut out = Vec::with_capacity(factorial(m));
    let mut cur: Vec<usize> = (0..m).collect();
    loop {
        out.push(Permutation { images: cur.clone() });
        // next permutation in lexicographic order
        let Some(i) = (0..m.saturating_sub(1)).rev().find(|&i| cur[i] < cur[i + 1]) else {
            break;
        };
        let j = (i + 1..m).rev().find(|&j| cur[j] > cur[i]).unwrap();
        cur.swap(i, j);
        cur[i + 1..].reverse();
    }
    Ok(out)
}

/// Cycle types of `S_m`, in decreasing lexicographic order of the partition.
pub fn conjugacy_classes(m: usize) -> Result<Vec<CycleType>> {
    check_degree(m)?;
    fn rec(rest: usize, max: usize, cur: &mut Vec<usize>, out: &mut Vec<CycleType>) {
        if rest == 0 {
            out.push(CycleType(cur.clone()));
            return;
        }
        for p in (1..=rest.min(max)).rev() {
            cur.push(p);
            rec(rest - p, p, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(m, m, &mut Vec::new(), &mut out);
    Ok(out)
}

/// `G[σ, τ] = d^{#(σ τ⁻¹)}` with rows and columns in lexicographic order.
pub fn gram_matrix(m: usize, d: f64) -> Result<DMatrix<f64>> {
    let perms = enumerate_sym(m)?;
    if !(d >= 1.0) || !d.is_finite() {
        return Err(invalid(format!("dimension {d} must be >= 1")));
    }
    let inverses: Vec<Permutation> = perms.iter().map(|p| p.inverse()).collect();
    let n = perms.len();
    let pow: Vec<f64> = (0..=m).map(|c| d.powi(c as i32)).collect();
    Ok(DMatrix::from_fn(n, n, |i, j| {
        pow[perms[i].compose(&inverses[j]).cycle_count()]
    }))
}

#[derive(Clone, Debug)]
pub struct WeingartenTable {
    degree: usize,
    dimension: f64,
    /// Indexed by lexicographic rank.
    values: Vec<f64>,
    condition: f64,
}

impl WeingartenTable {
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn dimension(&self) -> f64 {
        self.dimension
    }

    /// Spectral condition estimate of the linear system that was solved.
    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn value(&self, p: &Permutation) -> f64 {
        assert_eq!(p.degree(), self.degree, "permutation degree does not match table");
        self.values[p.rank()]
    }

    pub fn value_by_rank(&self, rank: usize) -> f64 {
        self.values[rank]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Weingarten function `Wg(π, d)` for all `π ∈ S_m`.
///
/// For `m <= DIRECT_GRAM_MAX` this is the identity column of the inverse
/// Gram matrix. For larger `m` the same system is restricted to class
/// functions, which is exact because `Wg` and `d^{#(.)}` are both central.
pub fn weingarten_table(m: usize, d: f64) -> Result<WeingartenTable> {
    check_degree(m)?;
    if m <= DIRECT_GRAM_MAX {
        weingarten_direct(m, d)
    } else {
        weingarten_by_class(m, d)
    }
}

fn weingarten_direct(m: usize, d: f64) -> Result<WeingartenTable> {
    let g = gram_matrix(m, d)?;
    let eig = g.clone().symmetric_eigenvalues();
    let (lo, hi) = eig
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &x| (lo.min(x), hi.max(x.abs())));
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if condition > MAX_CONDITION {
        return Err(Error::IllConditioned { m, d, condition });
    }
    let chol = g
        .cholesky()
        .ok_or(Error::IllConditioned { m, d, condition })?;
    // identity has rank 0
    let mut rhs = DVector::zeros(factorial(m));
    rhs[0] = 1.0;
    let col = chol.solve(&rhs);
    Ok(WeingartenTable {
        degree: m,
        dimension: d,
        values: col.iter().copied().collect(),
        condition,
    })
}

fn weingarten_by_class(m: usize, d: f64) -> Result<WeingartenTable> {
    if !(d >= 1.0) || !d.is_finite() {
        return Err(invalid(format!("dimension {d} must be >= 1")));
    }
    let perms = enumerate_sym(m)?;
    let classes = conjugacy_classes(m)?;
    let class_of = |p: &Permutation| {
        let ct = p.cycle_type();
        classes.iter().position(|c| *c == ct).unwrap()
    };
    let pclass: Vec<usize> = perms.iter().map(class_of).collect();
    let pcycles: Vec<usize> = perms.iter().map(|p| p.cycle_count()).collect();
    let nc = classes.len();
    // representative of each class: first permutation in lexicographic order
    let reps: Vec<usize> = (0..nc)
        .map(|c| pclass.iter().position(|&x| x == c).unwrap())
        .collect();
    // K[c, a] = Σ_{ρ : rep_c ρ⁻¹ ∈ a} d^{#ρ}
    let mut k = DMatrix::<f64>::zeros(nc, nc);
    for (c, &r) in reps.iter().enumerate() {
        for (i, rho) in perms.iter().enumerate() {
            let x = perms[r].compose(&rho.inverse());
            k[(c, pclass[x.rank()])] += d.powi(pcycles[i] as i32);
        }
    }
    let sv = k.clone().singular_values();
    let hi = sv.max();
    let lo = sv.min();
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if condition > MAX_CONDITION {
        return Err(Error::IllConditioned { m, d, condition });
    }
    let mut rhs = DVector::zeros(nc);
    rhs[pclass[0]] = 1.0;
    let w = k
        .lu()
        .solve(&rhs)
        .ok_or_else(|| numerical("class system is singular"))?;
    Ok(WeingartenTable {
        degree: m,
        dimension: d,
        values: pclass.iter().map(|&c| w[c]).collect(),
        condition,
    })
}

/// Moore-Penrose version of the table, `Wg = G⁺ e`, usable when `d < m`.
///
/// The Haar integral `∫ (U⊗U*)^{⊗m}` is still `Σ Wg(στ⁻¹)|P(σ)⟩⟨P(τ)|`
/// with this choice; eigenvalues of `G` below `1e-9 λ_max` are dropped.
/// Limited to `m <= DIRECT_GRAM_MAX`.
pub fn weingarten_pseudo_inverse(m: usize, d: f64) -> Result<WeingartenTable> {
    check_degree(m)?;
    if m > DIRECT_GRAM_MAX {
        return Err(invalid(format!("pseudo-inverse table limited to m <= {DIRECT_GRAM_MAX}")));
    }
    let g = gram_matrix(m, d)?;
    let eig = g.symmetric_eigen();
    let hi = eig.eigenvalues.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
    let cut = 1e-9 * hi;
    let kept_min = eig
        .eigenvalues
        .iter()
        .filter(|&&x| x > cut)
        .fold(f64::INFINITY, |a, &x| a.min(x));
    let n = factorial(m);
    let mut values = vec![0.0; n];
    for (l, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam <= cut {
            continue;
        }
        let v0 = eig.eigenvectors[(0, l)] / lam;
        for (i, val) in values.iter_mut().enumerate() {
            *val += eig.eigenvectors[(i, l)] * v0;
        }
    }
    Ok(WeingartenTable {
        degree: m,
        dimension: d,
        values,
        condition: hi / kept_min,
    })
}

/// `weingarten_table` when `G` is invertible, the pseudo-inverse otherwise.
pub fn weingarten_table_any(m: usize, d: f64) -> Result<WeingartenTable> {
    if d >= m as f64 {
        weingarten_table(m, d)
    } else {
        weingarten_pseudo_inverse(m, d)
    }
}

/// Leading large-`d` scaling `d^{#(p) - 2m}` of `Wg(p, d)`, without the
/// Möbius sign and Catalan weight.
pub fn wg_asymptotic_ratio(p: &Permutation, d: f64) -> f64 {
    let m = p.degree() as i32;
    d.powi(p.cycle_count() as i32 - 2 * m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_groups() {
        assert_eq!(enumerate_sym(1).unwrap(), vec![Permutation::identity(1)]);
        let s2 = enumerate_sym(2).unwrap();
        assert_eq!(s2.len(), 2);
        assert!(s2[0].is_identity());
        assert_eq!(s2[1].images(), &[1, 0]);
        assert_eq!(enumerate_sym(3).unwrap().len(), 6);
        assert!(enumerate_sym(0).is_err());
        assert!(enumerate_sym(9).is_err());
    }

    #[test]
    fn cycles() {
        assert_eq!(Permutation::identity(3).cycle_count(), 3);
        assert_eq!(Permutation::transposition(3, 0, 1).unwrap().cycle_count(), 2);
        let c3 = Permutation::new(vec![1, 2, 0]).unwrap();
        assert_eq!(c3.cycle_count(), 1);
        assert_eq!(c3.cycle_type().to_string(), "3");
        assert_eq!(
            Permutation::new(vec![1, 0, 3, 2, 4]).unwrap().cycle_type().to_string(),
            "2+2+1"
        );
    }

    #[test]
    fn rejects_non_bijections() {
        assert!(Permutation::new(vec![0, 0]).is_err());
        assert!(Permutation::new(vec![0, 2]).is_err());
        assert!(Permutation::new(vec![]).is_err());
    }

    #[test]
    fn rank_matches_enumeration() {
        for m in 1..=5 {
            for (i, p) in enumerate_sym(m).unwrap().iter().enumerate() {
                assert_eq!(p.rank(), i);
                assert_eq!(&Permutation::from_rank(m, i).unwrap(), p);
            }
        }
    }

    #[test]
    fn gram_small() {
        assert_eq!(gram_matrix(1, 3.0).unwrap()[(0, 0)], 3.0);
        let g = gram_matrix(2, 2.0).unwrap();
        assert_eq!(g, DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 4.0]));
        let g = gram_matrix(2, 4.0).unwrap();
        assert_eq!(g, DMatrix::from_row_slice(2, 2, &[16.0, 4.0, 4.0, 16.0]));
    }

    #[test]
    fn class_counts() {
        let counts: Vec<usize> = (1..=8).map(|m| conjugacy_classes(m).unwrap().len()).collect();
        assert_eq!(counts, vec![1, 2, 3, 5, 7, 11, 15, 22]);
    }

    #[test]
    fn wg_two_by_two() {
        let t = weingarten_table(2, 4.0).unwrap();
        assert!((t.value_by_rank(0) - 1.0 / 15.0).abs() < 1e-15);
        assert!((t.value_by_rank(1) + 1.0 / 60.0).abs() < 1e-15);
        let t1 = weingarten_table(1, 7.0).unwrap();
        assert!((t1.value_by_rank(0) - 1.0 / 7.0).abs() < 1e-16);
    }

    #[test]
    fn singular_gram_reports_condition() {
        match weingarten_table(3, 2.0) {
            Err(Error::IllConditioned { condition, .. }) => assert!(condition > MAX_CONDITION),
            other => panic!("expected ill-conditioned error, got {other:?}"),
        }
    }

    #[test]
    fn class_route_matches_direct() {
        for m in 2..=5 {
            for d in [8.0, 16.0] {
                let a = weingarten_direct(m, d).unwrap();
                let b = weingarten_by_class(m, d).unwrap();
                for (x, y) in a.values().iter().zip(b.values()) {
                    assert!((x - y).abs() <= 1e-12 * a.value_by_rank(0).abs(), "m={m} d={d}");
                }
            }
        }
    }

    #[test]
    fn pseudo_inverse_agrees_when_invertible() {
        for (m, d) in [(3, 4.0), (4, 8.0)] {
            let a = weingarten_table(m, d).unwrap();
            let b = weingarten_pseudo_inverse(m, d).unwrap();
            for (x, y) in a.values().iter().zip(b.values()) {
                assert!((x - y).abs() < 1e-12 * a.value_by_rank(0));
            }
        }
    }

    #[test]
    fn asymptote_identity() {
        let e = Permutation::identity(1);
        assert_eq!(wg_asymptotic_ratio(&e, 5.0), 0.2);
        assert_eq!(wg_asymptotic_ratio(&Permutation::identity(2), 4.0), 1.0 / 16.0);
    }
}

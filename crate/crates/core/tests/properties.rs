use kidesign::fit::{fit_exponential, rate_estimate, FitFlag};
use kidesign::linalg::{c64, partial_trace, permutation_operator, trace, trace_norm, CMatrix};
use kidesign::permgroup::{enumerate_sym, factorial, weingarten_table, Permutation};
use proptest::prelude::*;

fn perm(m: usize) -> impl Strategy<Value = Permutation> {
    (0..factorial(m)).prop_map(move |r| Permutation::from_rank(m, r).unwrap())
}

fn sized_perms() -> impl Strategy<Value = (Permutation, Permutation)> {
    (1usize..=6).prop_flat_map(|m| (perm(m), perm(m)))
}

fn hermitian(dim: usize) -> impl Strategy<Value = CMatrix> {
    prop::collection::vec(-1.0f64..1.0, 2 * dim * dim).prop_map(move |v| {
        let a = CMatrix::from_fn(dim, dim, |i, j| c64(v[2 * (i * dim + j)], v[2 * (i * dim + j) + 1]));
        (&a + a.adjoint()) * c64(0.5, 0.0)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rank_roundtrip_and_group_laws((p, q) in sized_perms()) {
        let m = p.degree();
        prop_assert_eq!(Permutation::from_rank(m, p.rank()).unwrap(), p.clone());
        prop_assert!(p.compose(&p.inverse()).is_identity());
        // conjugation preserves cycle type
        prop_assert_eq!(q.compose(&p).compose(&q.inverse()).cycle_type(), p.cycle_type());
        prop_assert_eq!(p.inverse().cycle_count(), p.cycle_count());
    }

    #[test]
    fn weingarten_is_a_class_function(m in 1usize..=5, e in 0usize..4, r1 in any::<prop::sample::Index>(), r2 in any::<prop::sample::Index>()) {
        let d = [8.0, 16.0, 64.0, 256.0][e];
        let table = weingarten_table(m, d).unwrap();
        let p = Permutation::from_rank(m, r1.index(factorial(m))).unwrap();
        let q = Permutation::from_rank(m, r2.index(factorial(m))).unwrap();
        let conj = q.compose(&p).compose(&q.inverse());
        prop_assert!((table.value(&p) - table.value(&conj)).abs() <= 1e-12 * table.value(&p).abs().max(1e-300));
    }

    #[test]
    fn weingarten_inverts_gram_rows(m in 1usize..=5, e in 0usize..4, r in any::<prop::sample::Index>()) {
        let d = [8.0, 16.0, 64.0, 256.0][e];
        let table = weingarten_table(m, d).unwrap();
        let perms = enumerate_sym(m).unwrap();
        let pi = &perms[r.index(perms.len())];
        for sigma in &perms {
            let s: f64 = perms
                .iter()
                .map(|tau| table.value(&pi.compose(&tau.inverse())) * d.powi(tau.compose(&sigma.inverse()).cycle_count() as i32))
                .sum();
            let want = if pi == sigma { 1.0 } else { 0.0 };
            prop_assert!((s - want).abs() < 1e-10);
        }
    }

    /// Off-diagonal Weingarten values are suppressed relative to the diagonal
    /// by at least one power of `d` per missing cycle, up to a bounded factor.
    #[test]
    fn weingarten_off_diagonal_suppression(m in 2usize..=4, r in any::<prop::sample::Index>()) {
        let d = 1024.0;
        let table = weingarten_table(m, d).unwrap();
        let p = Permutation::from_rank(m, r.index(factorial(m))).unwrap();
        let id = table.value(&Permutation::identity(m));
        let ratio = (table.value(&p) / id).abs();
        let gap = (m - p.cycle_count()) as i32;
        prop_assert!(ratio <= 10.0 * d.powi(-gap));
        prop_assert!(ratio >= 0.01 * d.powi(-gap));
    }

    #[test]
    fn permutation_operators_compose((p, q) in (1usize..=3).prop_flat_map(|m| (perm(m), perm(m)))) {
        let op = |x: &Permutation| permutation_operator(x, 1).unwrap();
        prop_assert!((op(&p) * op(&q) - op(&p.compose(&q))).norm() < 1e-14);
    }

    #[test]
    fn trace_norm_of_hermitian_is_eigen_sum(a in hermitian(6)) {
        let eig = a.clone().symmetric_eigen();
        let want: f64 = eig.eigenvalues.iter().map(|x| x.abs()).sum();
        prop_assert!((trace_norm(&a).unwrap() - want).abs() < 1e-10);
    }

    #[test]
    fn partial_trace_keeps_trace(a in hermitian(8)) {
        for keep in [vec![0], vec![1], vec![0, 2], vec![2]] {
            let r = partial_trace(&a, &[2, 2, 2], &keep).unwrap();
            prop_assert!((trace(&r) - trace(&a)).norm() < 1e-12);
        }
    }

    #[test]
    fn exponential_fit_recovers_parameters(a in -4.0f64..0.0, b in 0.2f64..3.0, c in 0.2f64..1.5) {
        let xs: Vec<f64> = (0..6).map(|n| n as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|&n| a + b * (-c * n).exp()).collect();
        let f = fit_exponential(&xs, &ys).unwrap();
        prop_assert_eq!(f.flag, FitFlag::Ok);
        prop_assert!((f.eval(-1.0) - (a + b * c.exp())).abs() < 1e-6 * (1.0 + b * c.exp()));
    }

    #[test]
    fn rate_is_recovered(v in 0.1f64..4.0, c in 0.01f64..100.0, len in 3usize..8) {
        let vals: Vec<(usize, f64)> = (1..=len).map(|t| (t, c * (-v * t as f64).exp2())).collect();
        prop_assert!((rate_estimate(&vals).unwrap() - v).abs() < 1e-9);
    }
}

use kidesign::dual::{build_w, build_wprime, diagram_value, t0, WTensor};
use kidesign::linalg::{c64, haar_moment_operator, permutation_vector_state, CMatrix, CVector};
use kidesign::permgroup::{enumerate_sym, weingarten_pseudo_inverse, weingarten_table_any, Permutation};
use kidesign::replica::*;
use kidesign::Boundary;

const G: f64 = 0.3;

fn spec(k: usize, n: usize, t: usize, bc: Boundary) -> ReplicaSpec {
    ReplicaSpec { k, n, t, n_a: 2, bc, g: G }
}

/// Σ_{σ,τ} f(σ,τ) D(σ,τ), one diagram at a time.
fn brute_raw(s: &ReplicaSpec, w: &WTensor) -> CMatrix {
    let perms = enumerate_sym(s.m()).unwrap();
    let table = weingarten_table_any(s.m(), (1u64 << s.t) as f64).unwrap();
    let dim = 4usize.pow(s.k as u32);
    let mut acc = CMatrix::zeros(dim, dim);
    for sigma in &perms {
        for tau in &perms {
            let f = match s.bc {
                Boundary::Periodic => prefactor_pbc(sigma, tau, s, &table).unwrap(),
                Boundary::Open => prefactor_obc(sigma, tau, s),
            };
            acc += diagram_term(sigma, tau, s, w).unwrap().value * c64(f, 0.0);
        }
    }
    acc
}

#[test]
fn class_sums_match_single_diagrams() {
    let w = build_w(2, G).unwrap();
    for (k, n) in [(1, 0), (1, 1), (1, 2), (2, 0), (2, 1)] {
        let cd = class_diagrams(k, n, &w).unwrap();
        for bc in [Boundary::Periodic, Boundary::Open] {
            for t in [1, 2, 3] {
                let fast = cd.raw_sum(t, bc).unwrap();
                let slow = brute_raw(&spec(k, n, t, bc), &w);
                let err = (&fast - &slow).norm() / slow.norm();
                assert!(err < 1e-12, "k={k} n={n} {bc} t={t}: {err}");
            }
        }
    }
}

#[test]
fn per_class_buckets_match() {
    let w = build_w(2, G).unwrap();
    let (k, n) = (2, 1);
    let cd = class_diagrams(k, n, &w).unwrap();
    let perms = enumerate_sym(3).unwrap();
    let s = spec(k, n, 1, Boundary::Open);
    for (ci, class) in cd.classes.iter().enumerate() {
        let mut acc = CMatrix::zeros(16, 16);
        for sigma in &perms {
            for tau in &perms {
                if tau.compose(&sigma.inverse()).cycle_type() == *class {
                    acc += diagram_term(sigma, tau, &s, &w).unwrap().value;
                }
            }
        }
        assert!((&acc - &cd.sums[ci]).norm() < 1e-11 * (1.0 + acc.norm()), "class {class}");
    }
}

/// The diagonal class alone gives a Haar-like operator: only identity
/// diagrams survive the isometry, summed over the group.
#[test]
fn identity_class_is_haar_proportional() {
    let w = build_w(2, G).unwrap();
    for k in 1..=3 {
        let cd = class_diagrams(k, 0, &w).unwrap();
        let id = cd.classes.iter().position(|c| c.cycle_count() == k).unwrap();
        let s = &cd.sums[id];
        let tr = kidesign::linalg::trace(s);
        let haar = haar_moment_operator(2, k).unwrap();
        let scaled = s / tr;
        assert!((scaled - haar.matrix).norm() < 1e-10, "k={k}");
    }
}

#[test]
fn diagrams_do_not_depend_on_depth() {
    let w = build_w(2, G).unwrap();
    let sigma = Permutation::new(vec![1, 0, 2]).unwrap();
    let tau = Permutation::new(vec![2, 0, 1]).unwrap();
    let a = diagram_term(&sigma, &tau, &spec(2, 1, 1, Boundary::Periodic), &w).unwrap();
    let b = diagram_term(&sigma, &tau, &spec(2, 1, 5, Boundary::Open), &w).unwrap();
    assert_eq!(a.value, b.value);
}

/// W'(t) differs from W(t0) by a fixed unitary on the extra temporal legs,
/// which cancels between permutation states once the scale is accounted for.
#[test]
fn wprime_diagrams_reduce_to_minimal_depth() {
    let w = build_w(2, G).unwrap();
    let wp = build_wprime(2, 2, G).unwrap();
    let extra = 2 - t0(2);
    let scale = (1u64 << extra) as f64;
    let (sw, swp) = (w.slices(), wp.slices());
    for sigma in enumerate_sym(2).unwrap() {
        for tau in enumerate_sym(2).unwrap() {
            for mu in [[0, 1], [2, 2], [3, 1]] {
                for nu in [[0, 1], [1, 3], [2, 2]] {
                    let a = diagram_value(&sw, &sigma, &tau, &mu, &nu).unwrap();
                    let b = diagram_value(&swp, &sigma, &tau, &mu, &nu).unwrap();
                    let cyc = tau.compose(&sigma.inverse()).cycle_count() as i32;
                    assert!((a * scale.powi(cyc) - b).norm() < 1e-10 * (1.0 + b.norm()));
                }
            }
        }
    }
}

#[test]
fn moments_are_gauge_invariant() {
    let w = build_w(2, G).unwrap();
    let w2 = w.scaled(c64(0.0, 2.7));
    for bc in [Boundary::Periodic, Boundary::Open] {
        let a = replica_moment(&spec(2, 1, 3, bc), &w).unwrap();
        let b = replica_moment(&spec(2, 1, 3, bc), &w2).unwrap();
        assert!((a.matrix - b.matrix).norm() < 1e-12);
    }
}

#[test]
fn replica_moment_is_permutation_symmetric() {
    let w = build_w(2, G).unwrap();
    let rho = replica_moment(&spec(3, 0, 3, Boundary::Open), &w).unwrap();
    for p in enumerate_sym(3).unwrap() {
        assert!((rho.permute_replicas(&p).unwrap().matrix - &rho.matrix).norm() < 1e-12);
    }
    assert!((rho.reduce_last().unwrap().matrix - replica_moment(&spec(2, 0, 3, Boundary::Open), &w).unwrap().matrix).norm() > 0.0);
}

/// Below `m = d` the Gram matrix is singular; the pseudo-inverse still builds
/// the projector onto the span of the permutation states.
#[test]
fn pseudo_inverse_projects_onto_permutation_span() {
    let (m, q) = (3, 1);
    let table = weingarten_pseudo_inverse(m, 2.0).unwrap();
    let perms = enumerate_sym(m).unwrap();
    let states: Vec<CVector> = perms.iter().map(|p| permutation_vector_state(p, q, m).unwrap()).collect();
    let dim = states[0].len();
    let mut proj = CMatrix::zeros(dim, dim);
    for (i, s) in perms.iter().enumerate() {
        for (j, t) in perms.iter().enumerate() {
            let wg = table.value(&s.compose(&t.inverse()));
            proj += &states[i] * states[j].adjoint() * c64(wg, 0.0);
        }
    }
    assert!((&proj * &proj - &proj).norm() < 1e-10);
    for s in &states {
        assert!((&proj * s - s).norm() < 1e-10);
    }
}

/// Reference values of the class route at `n_a = 2`, k = 2, n = 0.
#[test]
fn deviation_reference_values() {
    let w = build_w(2, G).unwrap();
    let cd = class_diagrams(2, 0, &w).unwrap();
    let cases = [
        (Boundary::Periodic, 2, 5.000e-2),
        (Boundary::Periodic, 4, 2.830e-3),
        (Boundary::Open, 2, 1.286e-1),
        (Boundary::Open, 4, 4.091e-2),
    ];
    for (bc, t, want) in cases {
        let d = cd.deviation(t, bc).unwrap();
        assert!((d / want - 1.0).abs() < 2e-3, "{bc} t={t}: {d}");
    }
}

#[test]
fn decay_ratios() {
    let w = build_w(2, G).unwrap();
    let cd = class_diagrams(2, 0, &w).unwrap();
    let p: Vec<f64> = (3..=8).map(|t| cd.deviation(t, Boundary::Periodic).unwrap()).collect();
    let o: Vec<f64> = (3..=8).map(|t| cd.deviation(t, Boundary::Open).unwrap()).collect();
    let rp = p[5] / p[4];
    let ro = o[5] / o[4];
    assert!((rp - 0.25).abs() < 0.01, "pbc ratio {rp}: {p:?}");
    assert!((ro - 0.5).abs() < 0.05, "obc ratio {ro}: {o:?}");
}

#[test]
fn first_moment_is_maximally_mixed_for_any_n() {
    let w = build_w(2, G).unwrap();
    for n in 0..=3 {
        for bc in [Boundary::Periodic, Boundary::Open] {
            let rho = replica_moment(&spec(1, n, 2, bc), &w).unwrap();
            let want = CMatrix::identity(4, 4) * c64(0.25, 0.0);
            assert!((rho.matrix - want).norm() < 1e-12, "n={n} {bc}");
        }
    }
}

#[test]
fn infeasible_sums_are_refused() {
    let w = build_w(4, G).unwrap();
    assert!(matches!(class_diagrams(4, 4, &w), Err(kidesign::Error::Infeasible { .. })));
}

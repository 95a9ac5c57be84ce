use kidesign::dual::{build_wprime, chain_amplitude, coupling_operator, bath_map, GateParams};
use kidesign::kim::*;
use kidesign::linalg::{c64, partial_trace, unitarity_defect, CMatrix, C64};
use kidesign::permgroup::enumerate_sym;
use kidesign::Boundary;

fn bits_of(x: usize, n: usize) -> Vec<usize> {
    (0..n).map(|i| (x >> (n - 1 - i)) & 1).collect()
}

#[test]
fn floquet_is_unitary() {
    for bc in [Boundary::Periodic, Boundary::Open] {
        let u = build_floquet(&KimConfig::new(6, 2, 1, bc)).unwrap();
        assert!(unitarity_defect(&u) < 1e-12);
    }
}

#[test]
fn gate_evolution_matches_dense_floquet() {
    for bc in [Boundary::Periodic, Boundary::Open] {
        let cfg = KimConfig::new(7, 3, 3, bc);
        let u = build_floquet(&cfg).unwrap();
        let mut v = nalgebra::DVector::from_element(128, c64(128f64.sqrt().recip(), 0.0));
        for _ in 0..3 {
            v = &u * v;
        }
        let psi = evolve(&cfg).unwrap();
        let err: f64 = psi.iter().zip(v.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-13, "{bc}: {err}");
    }
}

#[test]
fn norm_is_preserved() {
    for t in 1..=10 {
        let psi = evolve(&KimConfig::new(8, 2, t, Boundary::Open)).unwrap();
        let n: f64 = psi.iter().map(|a| a.norm_sqr()).sum();
        assert!((n - 1.0).abs() < 1e-12);
    }
}

#[test]
fn diagonal_evolution_only_changes_phases() {
    let cfg = KimConfig::generic(6, 2, 4, Boundary::Periodic, 0.4, 0.0, 0.0);
    let psi = evolve(&cfg).unwrap();
    for a in psi {
        assert!((a.norm() - 0.125).abs() < 1e-15);
    }
}

#[test]
fn dual_chain_reproduces_statevector() {
    for bc in [Boundary::Periodic, Boundary::Open] {
        for t in 1..=3 {
            let cfg = KimConfig::new(6, 2, t, bc);
            let psi = evolve(&cfg).unwrap();
            for (x, amp) in psi.iter().enumerate() {
                let a = chain_amplitude(&bits_of(x, 6), t, &cfg.gate_params(), bc, cfg.b1, cfg.bn).unwrap();
                assert!((a - amp).norm() < 1e-13, "{bc} t={t} x={x}");
            }
        }
    }
}

#[test]
fn dual_chain_generic_couplings() {
    let cfg = KimConfig::generic(5, 1, 2, Boundary::Open, 0.31, 0.52, 0.13);
    let psi = evolve(&cfg).unwrap();
    for (x, amp) in psi.iter().enumerate() {
        let a = chain_amplitude(&bits_of(x, 5), 2, &cfg.gate_params(), Boundary::Open, cfg.b1, cfg.bn).unwrap();
        assert!((a - amp).norm() < 1e-13);
    }
}

/// W' sandwiched between the two bath maps gives the projected amplitudes
/// up to a single scalar.
#[test]
fn wprime_with_baths_matches_projected_amplitudes() {
    let (n, n_a, t) = (8, 2, 2);
    let p = GateParams::self_dual(DEFAULT_G);
    for bc in [Boundary::Periodic, Boundary::Open] {
        let cfg = KimConfig::new(n, n_a, t, bc);
        let layout = cfg.layout();
        let psi = evolve(&cfg).unwrap();
        let w = build_wprime(n_a, t, DEFAULT_G).unwrap();
        let tm = coupling_operator(t, p.j).unwrap();
        let left = cfg.a_offset;
        let right = n - left - n_a;
        let mut ratio: Option<C64> = None;
        for z in 0..1usize << (n - n_a) {
            let zl = bits_of(z >> right, left);
            let zr = bits_of(z & ((1 << right) - 1), right);
            let (bl, br) = match bc {
                Boundary::Periodic => (bath_map(&zl, t, &p).unwrap(), bath_map(&zr, t, &p).unwrap()),
                Boundary::Open => {
                    // end sites carry the boundary field; rebuild those baths from the raw chain
                    let raw = |bits: &[usize], first: bool| -> CMatrix {
                        let dim = 1 << t;
                        let mut acc = CMatrix::identity(dim, dim);
                        for (i, &x) in bits.iter().enumerate() {
                            let extra = if first && i == 0 {
                                cfg.b1
                            } else if !first && i == bits.len() - 1 {
                                cfg.bn
                            } else {
                                0.0
                            };
                            let l = kidesign::dual::site_operator(x, t, &p, extra).unwrap();
                            let prev = if i == 0 { acc.clone() } else { &tm * &acc };
                            acc = CMatrix::from_fn(dim, dim, |a, b| l[a] * prev[(a, b)]);
                        }
                        acc
                    };
                    (raw(&zl, true), raw(&zr, false))
                }
            };
            for s in 0..1usize << n_a {
                let ws = w.slice(s);
                let amp = match bc {
                    Boundary::Periodic => {
                        // each bath map ends with the bond leaving it, so only
                        // the bond from A into the right bath is explicit
                        let m = &br * &tm * &ws * &bl;
                        m.trace()
                    }
                    Boundary::Open => (&br * &tm * &ws * &tm * &bl).iter().sum(),
                };
                let exact = psi[layout.embed(z, s)];
                if exact.norm() < 1e-6 {
                    continue;
                }
                let r = amp / exact;
                match ratio {
                    None => ratio = Some(r),
                    Some(r0) => assert!((r - r0).norm() <= 1e-8 * r0.norm(), "{bc}: {r} vs {r0}"),
                }
            }
        }
    }
}

#[test]
fn first_moment_is_exact_within_light_cone() {
    for bc in [Boundary::Periodic, Boundary::Open] {
        for n in [10, 12] {
            let max_t = (n - 2) / 2 - 1;
            for t in 1..=max_t {
                let cfg = KimConfig::new(n, 2, t, bc);
                let psi = evolve(&cfg).unwrap();
                let rho = moment_operator_streaming(&psi, &cfg.layout(), 1).unwrap();
                assert!(delta_k(&rho).unwrap() < 1e-10, "{bc} n={n} t={t}");
            }
        }
    }
}

#[test]
fn ensemble_reconstructs_reduced_density_matrix() {
    let cfg = KimConfig::new(10, 2, 3, Boundary::Periodic);
    let psi = evolve(&cfg).unwrap();
    let ens = projected_ensemble(&psi, &cfg.layout()).unwrap();
    assert!((ens.total_probability() - 1.0).abs() < 1e-12);
    for e in &ens.entries {
        if let Some(st) = &e.state {
            let n: f64 = st.iter().map(|a| a.norm_sqr()).sum();
            assert!((n - 1.0).abs() < 1e-10);
        }
    }
    let rho1 = moment_operator(&ens, 1).unwrap();
    // independent route: full density matrix, then partial trace
    let v = nalgebra::DVector::from_vec(psi.clone());
    let full = &v * v.adjoint();
    let l = cfg.layout();
    let dims = [1 << l.a_offset, 1 << l.n_a, 1 << (l.n - l.a_offset - l.n_a)];
    let rdm = partial_trace(&full, &dims, &[1]).unwrap();
    assert!((rho1.matrix - rdm).norm() < 1e-12);
}

#[test]
fn streaming_matches_materialized() {
    let cfg = KimConfig::new(10, 2, 2, Boundary::Open);
    let psi = evolve(&cfg).unwrap();
    let ens = projected_ensemble(&psi, &cfg.layout()).unwrap();
    for k in 1..=3 {
        let a = moment_operator(&ens, k).unwrap();
        let b = moment_operator_streaming(&psi, &cfg.layout(), k).unwrap();
        assert!((a.matrix - b.matrix).norm() < 1e-12);
    }
}

#[test]
fn partial_trace_reduces_moment_order() {
    let cfg = KimConfig::new(8, 2, 2, Boundary::Periodic);
    let psi = evolve(&cfg).unwrap();
    let r3 = moment_operator_streaming(&psi, &cfg.layout(), 3).unwrap();
    let r2 = moment_operator_streaming(&psi, &cfg.layout(), 2).unwrap();
    assert!((r3.reduce_last().unwrap().matrix - r2.matrix).norm() < 1e-12);
}

#[test]
fn delta_grows_with_k() {
    let cfg = KimConfig::new(10, 2, 2, Boundary::Periodic);
    let psi = evolve(&cfg).unwrap();
    let d: Vec<f64> = (1..=3)
        .map(|k| delta_k(&moment_operator_streaming(&psi, &cfg.layout(), k).unwrap()).unwrap())
        .collect();
    assert!(d[0] <= d[1] + 1e-12 && d[1] <= d[2] + 1e-12, "{d:?}");
}

#[test]
fn moments_are_replica_symmetric() {
    let cfg = KimConfig::new(8, 2, 2, Boundary::Open);
    let psi = evolve(&cfg).unwrap();
    let rho = moment_operator_streaming(&psi, &cfg.layout(), 3).unwrap();
    for p in enumerate_sym(3).unwrap() {
        assert!((rho.permute_replicas(&p).unwrap().matrix - &rho.matrix).norm() < 1e-13);
    }
}

#[test]
fn delta_ignores_outcome_order() {
    let cfg = KimConfig::new(8, 2, 2, Boundary::Periodic);
    let psi = evolve(&cfg).unwrap();
    let mut ens = projected_ensemble(&psi, &cfg.layout()).unwrap();
    let a = delta_k(&moment_operator(&ens, 2).unwrap()).unwrap();
    ens.entries.reverse();
    ens.entries.swap(3, 17);
    let b = delta_k(&moment_operator(&ens, 2).unwrap()).unwrap();
    assert!((a - b).abs() < 1e-13);
}

#[test]
fn first_design_time_is_minimal_depth() {
    for n_a in [1, 2, 3] {
        let series: Vec<f64> = (0..=3)
            .map(|t| {
                let cfg = KimConfig::new(12, n_a, t, Boundary::Periodic);
                let psi = evolve(&cfg).unwrap();
                delta_k(&moment_operator_streaming(&psi, &cfg.layout(), 1).unwrap()).unwrap()
            })
            .collect();
        assert_eq!(design_time(&series, 1e-8), Some(n_a.div_ceil(2)), "n_a={n_a}: {series:?}");
    }
}

#[test]
fn entropy_examples() {
    let product = evolve(&KimConfig::new(6, 2, 0, Boundary::Periodic)).unwrap();
    let l = Layout { n: 6, a_offset: 2, n_a: 2 };
    assert!(entanglement_entropy(&product, &l).unwrap().abs() < 1e-12);
    let s = 0.5f64.sqrt();
    let bell = vec![c64(s, 0.0), c64(0.0, 0.0), c64(0.0, 0.0), c64(s, 0.0)];
    let e = entanglement_entropy(&bell, &Layout { n: 2, a_offset: 0, n_a: 1 }).unwrap();
    assert!((e - 1.0).abs() < 1e-12);
    for (t, want) in [(1, 2.0), (2, 4.0)] {
        let cfg = KimConfig::new(12, 4, t, Boundary::Periodic);
        let psi = evolve(&cfg).unwrap();
        let s = entanglement_entropy(&psi, &cfg.layout()).unwrap();
        assert!((s - want).abs() < 1e-8, "t={t}: S={s}");
    }
}

#[test]
fn wraparound_flag() {
    let cfg = KimConfig::new(10, 2, 3, Boundary::Periodic);
    assert!(!cfg.wraparound());
    assert!(cfg.clone().with_t(4).wraparound());
}

#[test]
fn bath_ensemble_approaches_haar() {
    let d: Vec<f64> = (2..=6).map(|l| dual_unitary_ensemble_check(2, l, DEFAULT_G, 1).unwrap()).collect();
    assert!(d[4] < d[0], "{d:?}");
    for w in d.windows(2) {
        assert!(w[1] <= w[0] + 1e-12);
    }
}

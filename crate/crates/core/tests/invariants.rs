use coniq_core::certifier::{certify, recheck_closure, CertifyConfig};
use coniq_core::conical::{test_conicality, ConicalVerdict};
use coniq_core::graph::build_graph;
use coniq_core::lie::{closure, generators_from, jacobi_residual};
use coniq_core::resonance::{check_nonresonant, check_spectrum};
use coniq_core::spectrum::{decompose, eigenvalues_of};
use coniq_core::{models, random};
use coniq_core::{CMatrix, ConicalConfig, ControlBox, ControlHamiltonian, ControlPoint, HermitianOperator, Tolerances};
use num_complex::Complex64;
use proptest::prelude::*;

fn family(seed: u64, n: usize, real: bool) -> ControlHamiltonian {
    let mut r = random::rng(seed, 9);
    let mut op = || {
        let m = if real { random::goe(n, &mut r) } else { random::gue(n, &mut r) };
        HermitianOperator::new(m).unwrap()
    };
    ControlHamiltonian::new(op(), vec![op(), op()], ControlBox::symmetric(2, 1.0).unwrap()).unwrap()
}

fn conjugated(h: &ControlHamiltonian, w: &CMatrix) -> ControlHamiltonian {
    let c = |op: &HermitianOperator| HermitianOperator::symmetrized(w * op.matrix() * w.adjoint()).unwrap();
    ControlHamiltonian::new(
        c(h.drift()),
        h.controlled().iter().map(c).collect(),
        h.control_box().clone(),
    )
    .unwrap()
}

fn tol() -> Tolerances {
    Tolerances::default()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn evaluate_is_affine(seed in 0u64..1_000_000, n in 2usize..6, a in -1.0f64..1.0, b in -1.0f64..1.0,
                          c in -1.0f64..1.0, d in -1.0f64..1.0, alpha in 0.0f64..1.0) {
        let h = family(seed, n, false);
        let u = ControlPoint::new(vec![a, b]);
        let v = ControlPoint::new(vec![c, d]);
        let mix = h.matrix_at(&v.lerp(&u, alpha)).unwrap();
        let combo = h.matrix_at(&u).unwrap() * Complex64::from(alpha) + h.matrix_at(&v).unwrap() * Complex64::from(1.0 - alpha);
        prop_assert!((mix - combo).camax() <= 1e-14);
    }

    #[test]
    fn trace_is_affine(seed in 0u64..1_000_000, n in 2usize..6, a in -1.0f64..1.0, b in -1.0f64..1.0) {
        let h = family(seed, n, false);
        let tr = h.matrix_at(&[a, b]).unwrap().trace();
        let want = h.drift().trace() + a * h.controlled()[0].trace() + b * h.controlled()[1].trace();
        prop_assert!((tr.re - want).abs() <= 1e-13 && tr.im.abs() <= 1e-13);
    }

    #[test]
    fn resonance_depends_only_on_eigenvalues(seed in 0u64..1_000_000, n in 2usize..6, a in -1.0f64..1.0, b in -1.0f64..1.0) {
        let h = family(seed, n, true);
        let u = ControlPoint::new(vec![a, b]);
        let full = check_nonresonant(&h, &u, &tol()).unwrap();
        let bare = check_spectrum(&eigenvalues_of(&h.matrix_at(&u).unwrap()), u.clone(), &tol());
        prop_assert_eq!(full.passes, bare.passes);
        let w = random::unitary(n, &mut random::rng(seed, 4));
        let rotated = check_nonresonant(&conjugated(&h, &w), &u, &tol()).unwrap();
        match (full.min_gap_separation, rotated.min_gap_separation) {
            (Some(x), Some(y)) => prop_assert!((x - y).abs() <= 1e-10),
            (x, y) => prop_assert_eq!(x, y),
        }
    }

    #[test]
    fn resonance_scaling_covariance(seed in 0u64..1_000_000, s in 0.1f64..10.0) {
        let h = family(seed, 4, true);
        let u = ControlPoint::new(vec![0.21, -0.37]);
        let base = check_nonresonant(&h, &u, &tol()).unwrap().min_gap_separation.unwrap();
        let scaled = check_nonresonant(&h.scaled(s).unwrap(), &u, &tol()).unwrap().min_gap_separation.unwrap();
        prop_assert!((scaled - s * base).abs() <= 1e-12 * s.max(1.0) * (1.0 + base));
    }

    #[test]
    fn graph_gauge_and_basis_change(seed in 0u64..1_000_000, n in 2usize..6, phases in prop::collection::vec(-3.0f64..3.0, 5)) {
        let h = family(seed, n, false);
        let u = ControlPoint::new(vec![0.4, 0.1]);
        let sp = decompose(&h, &u).unwrap();
        let g = build_graph(&h, &sp, &tol()).unwrap();
        let mut gauged = sp.clone();
        for j in 0..n {
            let z = Complex64::from_polar(1.0, phases[j]);
            gauged.frame.column_mut(j).iter_mut().for_each(|x| *x *= z);
        }
        let w = random::unitary(n, &mut random::rng(seed, 5));
        let hc = conjugated(&h, &w);
        let mut rotated = sp.clone();
        rotated.frame = &w * &sp.frame;
        for other in [build_graph(&h, &gauged, &tol()).unwrap(), build_graph(&hc, &rotated, &tol()).unwrap()] {
            prop_assert_eq!(other.edges.len(), g.edges.len());
            for (e, f) in g.edges.iter().zip(&other.edges) {
                prop_assert_eq!((e.j, e.k), (f.j, f.k));
                prop_assert!((e.weight - f.weight).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn closure_conjugation_invariant(seed in 0u64..1_000_000, n in 2usize..5, k in 1usize..4) {
        let h = family(seed, n, seed % 2 == 0);
        let w = random::unitary(n, &mut random::rng(seed, 6));
        let a: Vec<CMatrix> = generators_from(&h).into_iter().take(k).collect();
        let b: Vec<CMatrix> = a.iter().map(|x| &w * x * w.adjoint()).collect();
        prop_assert_eq!(closure(&a, &tol()).unwrap().dimension, closure(&b, &tol()).unwrap().dimension);
    }

    #[test]
    fn closure_monotone(seed in 0u64..1_000_000, n in 2usize..5, k in 1usize..3) {
        let gens = generators_from(&family(seed, n, true));
        let smaller = closure(&gens[..k], &tol()).unwrap().dimension;
        let larger = closure(&gens[..k + 1], &tol()).unwrap().dimension;
        prop_assert!(larger >= smaller);
    }

    #[test]
    fn jacobi_on_basis(seed in 0u64..1_000_000, n in 2usize..5, picks in prop::array::uniform3(0usize..1000)) {
        let res = closure(&generators_from(&family(seed, n, false)), &tol()).unwrap();
        let pick = |i: usize| &res.basis[i % res.basis.len()];
        let (a, b, c) = (pick(picks[0]), pick(picks[1]), pick(picks[2]));
        let scale = a.norm() * b.norm() * c.norm();
        prop_assert!(jacobi_residual(a, b, c) <= 1e-10 * scale.max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn certificates_recheckable(angle in 0.0f64..6.28, scale in 0.5f64..3.0, x in -0.5f64..0.5, y in -0.5f64..0.5) {
        // rotated and scaled (sigma_x, sigma_z) cone with apex at (x, y)
        let (c, s) = (angle.cos(), angle.sin());
        let a = models::sigma_x() * Complex64::from(scale * c) + models::sigma_z() * Complex64::from(scale * s);
        let b = models::sigma_x() * Complex64::from(-scale * s) + models::sigma_z() * Complex64::from(scale * c);
        let drift = (&a * Complex64::from(-x)) + (&b * Complex64::from(-y));
        let h = ControlHamiltonian::new(
            HermitianOperator::new(drift).unwrap(),
            vec![HermitianOperator::new(a).unwrap(), HermitianOperator::new(b).unwrap()],
            ControlBox::symmetric(2, 1.0).unwrap(),
        )
        .unwrap();
        let u = ControlPoint::new(vec![x, y]);
        let verdict = test_conicality(&h, &u, 1, &ConicalConfig::default(), &tol()).unwrap();
        let ConicalVerdict::Conical(cert) = verdict else { return Err(TestCaseError::fail("not conical")) };
        // re-check from decompose alone
        let sp = decompose(&h, &cert.u_star).unwrap();
        prop_assert!(sp.gap(1).unwrap() <= tol().degeneracy_threshold(sp.diameter()));
        prop_assert_eq!(cert.slopes.len(), cert.k);
        prop_assert!(cert.c_hat > 0.0 && cert.fit_residuals.iter().all(|r| *r <= 0.1));
        prop_assert!((cert.c_hat - 2.0 * scale).abs() <= 1e-6 * scale);
        let d = [0.6f64, 0.8];
        let g = decompose(&h, &cert.u_star.offset(&d, cert.t0)).unwrap().gap(1).unwrap();
        prop_assert!(g >= cert.c_hat * cert.t0 * (1.0 - 1e-9));
    }

    #[test]
    fn controllable_verdicts_survive_tighter_tolerance(seed in 0u64..1_000_000, n in 2usize..5) {
        let h = family(seed, n, seed % 3 == 0);
        let cert = certify(&h, &CertifyConfig { rng_seed: seed, seed_budget: 8, ..Default::default() }).unwrap();
        if cert.verdict.is_controllable() {
            prop_assert!(recheck_closure(&h, &cert, 10.0).unwrap());
        }
    }
}

#[test]
fn pauli_slope_converges_as_t0_shrinks() {
    let h = models::pauli_model();
    let diam = h.control_box().diameter();
    let errs: Vec<f64> = [1e-2, 1e-3, 1e-4]
        .iter()
        .map(|t0| {
            let cfg = ConicalConfig {
                t0_rel: t0 / diam,
                ..Default::default()
            };
            let v = test_conicality(&h, &ControlPoint::zeros(2), 1, &cfg, &tol()).unwrap();
            (v.certificate().unwrap().c_hat - 2.0).abs()
        })
        .collect();
    assert!(errs.iter().all(|e| *e < 1e-9), "{errs:?}");
}

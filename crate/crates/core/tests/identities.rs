use proptest::prelude::*;
use wulffcap::functionals::PhiParams;
use wulffcap::identities::{
    self, check_div_identities, check_kato, check_sign_fields, sample_constrained_hessian, sign_sample, AnalyticField,
    HessianState, PointCharges, WulffPotential,
};
use wulffcap::linalg;
use wulffcap::norms::NormSpec;
use wulffcap::Norm3;

fn families() -> Vec<Norm3> {
    vec![
        Norm3::new(NormSpec::euclidean()).unwrap(),
        Norm3::new(NormSpec::ellipsoid([[2.0, 0.3, 0.1], [0.3, 1.0, -0.2], [0.1, -0.2, 3.0]])).unwrap(),
        Norm3::new(NormSpec::power(4.0)).unwrap(),
        Norm3::new(NormSpec::cube(4, 0.05)).unwrap(),
    ]
}

#[test]
fn projection_enforces_the_constraint() {
    for n in families() {
        for p in [1.3, 2.0, 2.7] {
            let s = sample_constrained_hessian(&n, p, [0.3, -1.2, 0.8], 11).unwrap();
            assert!(s.constraint_residual() < 1e-12, "{} {p}", n.label());
            assert!(linalg::asymmetry(&s.hess) <= 1e-15 * linalg::frobenius_norm(&s.hess));
            let again = sample_constrained_hessian(&n, p, [0.3, -1.2, 0.8], 11).unwrap();
            assert_eq!(s.hess, again.hess);
        }
    }
}

#[test]
fn euclidean_p2_constraint_is_tracelessness() {
    let n = Norm3::new(NormSpec::euclidean()).unwrap();
    let s = sample_constrained_hessian(&n, 2.0, [1.0, 2.0, -0.5], 3).unwrap();
    assert!(linalg::trace(&s.hess).abs() < 1e-13);
}

#[test]
fn zero_hessian_is_a_valid_state() {
    let n = Norm3::new(NormSpec::power(4.0)).unwrap();
    let s = HessianState::new(&n, 1.7, [0.2, 0.5, -1.0], [[0.0; 3]; 3]).unwrap();
    assert_eq!(s.constraint_residual(), 0.0);
    let a = s.algebra();
    assert_eq!((a.mean_curvature, a.sigma2, a.pinch, a.grad_f_sq, a.tangential_sq), (0.0, 0.0, 0.0, 0.0, 0.0));
    assert_eq!(check_kato(&s).max(), 0.0);
}

#[test]
fn invalid_states_are_rejected() {
    let n = Norm3::new(NormSpec::euclidean()).unwrap();
    assert!(HessianState::new(&n, 2.0, [0.0; 3], [[0.0; 3]; 3]).is_err());
    assert!(HessianState::new(&n, 1.0, [1.0, 0.0, 0.0], [[0.0; 3]; 3]).is_err());
    let asym = [[0.0, 1.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]];
    assert!(HessianState::new(&n, 2.0, [1.0, 0.0, 0.0], asym).is_err());
}

#[test]
fn kato_on_the_euclidean_radial_state() {
    // u = r^{-k}: the level sets are round spheres, so the pinch and the
    // tangential term vanish.
    let n = Norm3::new(NormSpec::euclidean()).unwrap();
    for p in [1.3, 2.0, 2.7] {
        let field = WulffPotential { norm: n.clone(), p, radius: 1.0 };
        let (_, xi, hess) = field.jet(&[0.6, -1.1, 1.7]).unwrap();
        let s = HessianState::new(&n, p, xi, hess).unwrap();
        let a = s.algebra();
        let scale = a.mean_curvature.powi(2);
        assert!(a.pinch.abs() < 1e-12 * scale, "{a:?}");
        assert!(a.tangential_sq.abs() < 1e-12 * a.grad_f_sq, "{a:?}");
        assert!(check_kato(&s).max() < 1e-10, "{:?}", check_kato(&s));
    }
}

#[test]
fn kato_identities_on_random_states() {
    for n in families() {
        for p in [1.3, 2.0, 2.7] {
            let r = identities::kato_suite(&n, p, 1000, 2024).unwrap();
            assert!(r.max_constraint_residual < 1e-12, "{r:?}");
            assert!(r.max() < 1e-8, "{r:?}");
        }
    }
}

#[test]
fn orthogonal_decomposition_and_curvature_forms() {
    let n = Norm3::new(NormSpec::power(4.0)).unwrap();
    for s in identities::sample_states(&n, 1.6, 200, 5).unwrap() {
        let a = s.algebra();
        let lhs = a.grad_f_sq;
        let rhs = a.tangential_sq + a.normal_second.powi(2);
        assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(rhs.abs()));
        assert!(a.grad_f_sq >= 0.0 && a.tangential_sq >= -1e-12 * a.grad_f_sq);
        assert!(a.pinch >= -1e-10 * (a.mean_curvature.powi(2) + a.sigma2.abs()));
    }
}

#[test]
fn sign_fields_on_random_states() {
    for n in families() {
        for (p, q) in [(1.3, 5.0), (2.0, 2.0), (2.7, 1.2)] {
            let params = PhiParams::new(3, p, q).unwrap();
            let r = check_sign_fields(&n, &params, 0.5, 10_000, 99).unwrap();
            assert_eq!((r.theta_violations, r.div_x_violations, r.div_y_violations), (0, 0, 0), "{r:?}");
            assert!(r.theta_consistency < 1e-9, "{r:?}");
        }
    }
}

#[test]
fn sign_fields_at_the_boundary_of_the_parameter_region() {
    // q = 1 + 1/p*: the (H_F − p*F/u)² coefficient of div X vanishes and the
    // tangential coefficient q(p−1) − 1 = (p−1)(n−2)/(n−1) stays positive.
    let n = Norm3::new(NormSpec::power(4.0)).unwrap();
    for p in [1.05, 1.5, 2.5] {
        let qmin = PhiParams::new(3, p, 100.0).unwrap().q_min();
        let params = PhiParams::new(3, p, qmin).unwrap();
        let r = check_sign_fields(&n, &params, 0.9, 2000, 1).unwrap();
        assert_eq!((r.theta_violations, r.div_x_violations, r.div_y_violations), (0, 0, 0), "{r:?}");
    }
}

#[test]
fn sign_fields_vanish_on_wulff_potentials() {
    for n in families().into_iter().take(3) {
        let (p, q) = (1.5, 3.0);
        let params = PhiParams::new(3, p, q).unwrap();
        let field = WulffPotential { norm: n.clone(), p, radius: 1.0 };
        let (u, xi, hess) = field.jet(&[1.2, 0.4, -2.0]).unwrap();
        let s = HessianState::new(&n, p, xi, hess).unwrap();
        let smp = sign_sample(&s, &params, 0.5, u);
        let mag = params.p_star() * n.value(&xi).unwrap() / u;
        assert!(smp.theta.abs() < 1e-10 * mag * mag, "{smp:?}");
        assert!(smp.div_x.abs() < 1e-10 * mag * mag, "{smp:?}");
    }
}

#[test]
fn prefactor_limit_of_div_y() {
    let n = Norm3::new(NormSpec::euclidean()).unwrap();
    let params = PhiParams::new(3, 2.0, 2.0).unwrap();
    let s = sample_constrained_hessian(&n, 2.0, [0.4, 0.1, 0.9], 8).unwrap();
    let smp = sign_sample(&s, &params, 1.0 - 1e-9, 1.0 - 1e-12);
    assert!(smp.div_y.abs() <= 1e-8 * smp.div_x.abs());
    assert!(smp.div_y <= 0.0);
}

#[test]
fn divergence_identities_on_the_euclidean_wulff_potential() {
    let n = Norm3::new(NormSpec::euclidean()).unwrap();
    let field = WulffPotential { norm: n.clone(), p: 2.0, radius: 1.0 };
    let probes = identities::wulff_probes(&n, 1.0, &[1.5, 2.0, 3.0], 4, 17).unwrap();
    let params = PhiParams::new(3, 2.0, 2.0).unwrap();
    let r = check_div_identities(&field, &n, &params, 0.5, &probes).unwrap();
    assert!(r.richardson_ok, "{r:?}");
    assert!(r.max_divergence_free < 1e-6, "{r:?}");
    assert!(r.max_contracted < 1e-6, "{r:?}");
    assert!(r.max_div_x < 1e-6 && r.max_div_y < 1e-6, "{r:?}");
}

#[test]
fn divergence_identities_on_anisotropic_wulff_potentials() {
    for (n, p, q) in [
        (Norm3::new(NormSpec::power(4.0)).unwrap(), 1.5, 3.0),
        (Norm3::new(NormSpec::ellipsoid_diag([1.0, 2.0, 4.0])).unwrap(), 2.5, 1.5),
    ] {
        let field = WulffPotential { norm: n.clone(), p, radius: 1.0 };
        let probes = identities::wulff_probes(&n, 1.0, &[1.5, 2.0, 3.0], 4, 3).unwrap();
        let params = PhiParams::new(3, p, q).unwrap();
        let r = check_div_identities(&field, &n, &params, 0.3, &probes).unwrap();
        assert!(r.richardson_ok, "{}: {r:?}", n.label());
        assert!(r.max() < 1e-6, "{}: {r:?}", n.label());
        for probe in &r.probes {
            assert!(probe.pde_residual < 1e-12);
            assert!(probe.div_x_value.abs() < 1e-9, "{probe:?}");
        }
    }
}

#[test]
fn divergence_identities_on_a_non_umbilic_harmonic_field() {
    // Two point charges: every bracket term of div X is active.
    let n = Norm3::new(NormSpec::euclidean()).unwrap();
    let field = PointCharges { charges: vec![([0.0, 0.0, 0.0], 1.0), ([0.4, 0.0, 0.1], 0.5)] };
    let probes: Vec<[f64; 3]> = vec![[2.0, 0.5, 0.0], [-1.5, 1.0, 0.5], [0.3, -2.5, 1.0], [1.0, 1.0, 1.0]];
    let params = PhiParams::new(3, 2.0, 2.5).unwrap();
    let r = check_div_identities(&field, &n, &params, 0.2, &probes).unwrap();
    assert!(r.richardson_ok, "{r:?}");
    assert!(r.max() < 1e-6, "{r:?}");
    assert!(r.probes.iter().all(|p| p.div_x_value < 0.0), "{r:?}");
}

#[test]
fn div_identity_preconditions() {
    let n = Norm3::new(NormSpec::euclidean()).unwrap();
    let params = PhiParams::new(3, 2.0, 2.0).unwrap();
    assert!(check_sign_fields(&n, &params, 1.0, 10, 0).is_err());
    assert!(check_sign_fields(&n, &params, 0.0, 10, 0).is_err());
    let field = PointCharges { charges: vec![([0.0; 3], 1.0)] };
    assert!(check_div_identities(&field, &n, &params, 0.5, &[[0.0; 3]]).is_err());
}

proptest! {
    #[test]
    fn kato_holds_for_arbitrary_gradients(
        x in -3.0f64..3.0, y in -3.0f64..3.0, z in -3.0f64..3.0,
        p in 1.05f64..2.95, family in 0usize..4, seed in any::<u64>(),
    ) {
        prop_assume!(x.abs() + y.abs() + z.abs() > 1e-3);
        let norms = families();
        let s = sample_constrained_hessian(&norms[family], p, [x, y, z], seed).unwrap();
        prop_assert!(check_kato(&s).max() < 1e-8);
    }

    #[test]
    fn theta_is_never_positive(
        p in 1.05f64..2.95, extra in 0.0f64..4.0, u in 1e-3f64..1.0, family in 0usize..4, seed in any::<u64>(),
    ) {
        let norms = families();
        let qmin = PhiParams::new(3, p, 1e3).unwrap().q_min();
        let params = PhiParams::new(3, p, qmin + extra).unwrap();
        let s = sample_constrained_hessian(&norms[family], p, [0.7, -0.2, 1.1], seed).unwrap();
        let smp = sign_sample(&s, &params, 0.5, u);
        prop_assert!(smp.theta <= 1e-12 * smp.theta_scale);
        prop_assert!(smp.div_x <= 1e-12 * smp.div_scale);
    }
}

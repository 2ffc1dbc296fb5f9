use proptest::prelude::*;
use wulffcap::linalg;
use wulffcap::norms::{Norm, NormSpec};
use wulffcap::{Error, Norm3};

fn families() -> Vec<Norm3> {
    vec![
        Norm3::new(NormSpec::euclidean()).unwrap(),
        Norm3::new(NormSpec::ellipsoid([[2.0, 0.3, 0.1], [0.3, 1.0, -0.2], [0.1, -0.2, 3.0]])).unwrap(),
        Norm3::new(NormSpec::power(4.0)).unwrap(),
        Norm3::new(NormSpec::power(1.5)).unwrap(),
        Norm3::new(NormSpec::cube(4, 0.05)).unwrap(),
        Norm3::new(NormSpec::smoothed_polytope(
            vec![[1.0, 1.0, 0.0], [1.0, -1.0, 0.0], [0.0, 0.5, 1.0], [0.3, 0.0, -1.0]],
            6,
            0.1,
        ))
        .unwrap(),
    ]
}

/// Central differences of a scalar function.
fn fd_gradient(f: impl Fn(&[f64; 3]) -> f64, x: &[f64; 3], h: f64) -> [f64; 3] {
    std::array::from_fn(|i| {
        let mut a = *x;
        let mut b = *x;
        a[i] += h;
        b[i] -= h;
        (f(&a) - f(&b)) / (2.0 * h)
    })
}

fn fd_hessian(g: impl Fn(&[f64; 3]) -> [f64; 3], x: &[f64; 3], h: f64) -> [[f64; 3]; 3] {
    let mut m = [[0.0; 3]; 3];
    for j in 0..3 {
        let mut a = *x;
        let mut b = *x;
        a[j] += h;
        b[j] -= h;
        let (ga, gb) = (g(&a), g(&b));
        for i in 0..3 {
            m[i][j] = (ga[i] - gb[i]) / (2.0 * h);
        }
    }
    m
}

fn max_rel(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> f64 {
    let scale = linalg::frobenius_norm(b).max(1e-300);
    linalg::frobenius_norm(&linalg::mat_sub(a, b)) / scale
}

#[test]
fn power_four_gradient_matches_finite_differences() {
    let n = Norm3::new(NormSpec::power(4.0)).unwrap();
    let x = [1.0, 1.0, 1.0];
    let g = n.gradient(&x).unwrap();
    let fd = fd_gradient(|v| n.value(v).unwrap(), &x, 1e-5);
    for i in 0..3 {
        assert!((g[i] - fd[i]).abs() < 1e-7, "{g:?} vs {fd:?}");
    }
    assert!((n.value(&x).unwrap() - 3f64.powf(0.25)).abs() < 1e-15);
}

#[test]
fn a_matrix_is_hessian_of_half_square() {
    let xs = [[0.3, -0.8, 0.5], [1.0, 0.2, 0.1], [-0.4, 0.4, 0.9]];
    for n in families() {
        for x in &xs {
            let a = n.a_matrix(x).unwrap();
            // gradient of F²/2 is F F_ξ
            let fd2 = fd_hessian(
                |v| {
                    let (f, g) = n.first_order(v);
                    linalg::scale(&g, f)
                },
                x,
                1e-6,
            );
            assert!(max_rel(&a, &fd2) < 1e-6, "{}: {:?} vs {:?}", n.label(), a, fd2);
        }
    }
}

#[test]
fn hessian_matches_finite_differences_of_gradient() {
    let x = [0.7, -0.2, 0.45];
    for n in families() {
        let h = n.hessian(&x).unwrap();
        let fd = fd_hessian(|v| n.first_order(v).1, &x, 1e-6);
        assert!(max_rel(&h, &fd) < 1e-6, "{}", n.label());
        assert!(linalg::asymmetry(&h) < 1e-12);
    }
}

#[test]
fn euclidean_tensors_are_identity() {
    let n = Norm3::new(NormSpec::euclidean()).unwrap();
    let x = [0.3, -2.0, 1.1];
    let a = n.a_matrix(&x).unwrap();
    let ap = n.a_p_matrix(&x, 2.0).unwrap();
    let id = linalg::identity::<f64, 3>();
    assert!(linalg::frobenius_norm(&linalg::mat_sub(&a, &id)) < 1e-14);
    assert!(linalg::frobenius_norm(&linalg::mat_sub(&ap, &id)) < 1e-14);
}

#[test]
fn zero_vector_is_rejected() {
    for n in families() {
        let z = [0.0; 3];
        assert_eq!(n.value(&z), Err(Error::ZeroVector));
        assert_eq!(n.gradient(&z), Err(Error::ZeroVector));
        assert_eq!(n.hessian(&z), Err(Error::ZeroVector));
        assert_eq!(n.a_matrix(&z), Err(Error::ZeroVector));
        assert_eq!(n.dual_value(&z), Err(Error::ZeroVector));
        assert_eq!(n.first_order(&z).0, 0.0);
    }
}

/// Brute-force supremum of ⟨ξ,x⟩/F(ξ) over a dense sphere grid plus local
/// coordinate refinement; independent of the Newton maximization.
fn brute_force_dual(f: impl Fn(&[f64; 3]) -> f64, x: &[f64; 3]) -> f64 {
    let ratio = |t: f64, p: f64| {
        let v = [t.sin() * p.cos(), t.sin() * p.sin(), t.cos()];
        linalg::dot(&v, x) / f(&v)
    };
    let (mut bt, mut bp, mut best) = (0.0, 0.0, f64::NEG_INFINITY);
    let m = 200;
    for i in 0..=m {
        for j in 0..2 * m {
            let t = std::f64::consts::PI * i as f64 / m as f64;
            let p = std::f64::consts::PI * j as f64 / m as f64;
            let r = ratio(t, p);
            if r > best {
                best = r;
                bt = t;
                bp = p;
            }
        }
    }
    let mut step = std::f64::consts::PI / m as f64;
    while step > 1e-12 {
        let mut improved = false;
        for (dt, dp) in [(step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step)] {
            let r = ratio(bt + dt, bp + dp);
            if r > best {
                best = r;
                bt += dt;
                bp += dp;
                improved = true;
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    best
}

#[test]
fn closed_form_duals_match_sup_formula() {
    let ell = Norm3::new(NormSpec::ellipsoid_diag([1.0, 4.0, 9.0])).unwrap();
    let x = [0.0, 2.0, 0.0];
    let sup = brute_force_dual(|v| ell.value(v).unwrap(), &x);
    assert!((ell.dual_value(&x).unwrap() - 1.0).abs() < 1e-15);
    assert!((sup - 1.0).abs() < 1e-6, "{sup}");

    let pw = Norm3::new(NormSpec::power(4.0)).unwrap();
    let x = [1.0, 1.0, 1.0];
    let sup = brute_force_dual(|v| pw.value(v).unwrap(), &x);
    assert!((pw.dual_value(&x).unwrap() - 3f64.powf(0.75)).abs() < 1e-14);
    assert!((sup - 3f64.powf(0.75)).abs() < 1e-6, "{sup}");
}

#[test]
fn numerical_dual_agrees_with_closed_forms_and_brute_force() {
    let xs = [[0.3, -0.8, 0.5], [1.0, 0.2, 0.1], [0.0, 0.0, 2.0]];
    for n in families() {
        for x in &xs {
            let (v, g, _) = n.numerical_dual(x).unwrap();
            let (vd, gd) = n.dual_first_order(x).unwrap();
            assert!((v - vd).abs() < 1e-9 * vd, "{}: {v} vs {vd}", n.label());
            assert!(linalg::norm(&linalg::sub(&g, &gd)) < 1e-7);
            let sup = brute_force_dual(|y| n.value(y).unwrap(), x);
            assert!(vd >= sup - 1e-9 * vd && (vd - sup).abs() < 1e-6 * vd, "{}: {vd} vs {sup}", n.label());
        }
    }
}

#[test]
fn dual_hessian_matches_finite_differences() {
    let x = [0.35, 0.6, -0.4];
    for n in families() {
        let (_, _, h) = n.dual_second_order(&x).unwrap();
        let fd = fd_hessian(|v| n.dual_gradient(v).unwrap(), &x, 1e-5);
        assert!(max_rel(&h, &fd) < 1e-5, "{}: {h:?} vs {fd:?}", n.label());
    }
}

#[test]
fn dual_of_dual_recovers_norm() {
    use wulffcap::norms::{a_from, conjugate_maximize, DualOptions};
    for n in families() {
        let mut worst: f64 = 0.0;
        for i in 0..100 {
            let t = 0.37 + i as f64 * 0.61;
            let xi = [t.sin() * (2.3 * t).cos(), t.sin() * (2.3 * t).sin(), t.cos() + 0.05];
            let eval = |x: &[f64; 3]| {
                let (f, g, h) = n.dual_second_order(x).unwrap();
                (f, g, a_from(f, &g, &h))
            };
            // the inner dual is itself numerical for polytopes, so the outer
            // residual cannot go below its ~1e-10 noise floor
            let opts = DualOptions { tolerance: 1e-7, ..DualOptions::default() };
            let (dd, _, _) = conjugate_maximize(eval, &xi, &[], opts).unwrap();
            let f = n.value(&xi).unwrap();
            worst = worst.max((dd - f).abs() / f);
        }
        assert!(worst < 1e-5, "{}: {worst}", n.label());
    }
}

#[test]
fn validation_reports() {
    let e = Norm3::new(NormSpec::euclidean()).unwrap().validate(1000, 7).unwrap();
    assert!(e.pass && e.euler_residual < 1e-12 && e.inversion_residual < 1e-12, "{e:?}");

    let cube = Norm3::new(NormSpec::cube(4, 0.05)).unwrap().validate(1000, 7).unwrap();
    assert!(cube.pass && cube.min_ellipticity > 0.0, "{cube:?}");

    let degenerate = Norm3::new(NormSpec::cube(4, 0.0)).unwrap().validate(1000, 7).unwrap();
    assert!(!degenerate.pass && degenerate.min_ellipticity <= 0.0, "{degenerate:?}");
}

#[test]
fn validation_is_deterministic_per_seed() {
    let n = Norm3::new(NormSpec::power(3.0)).unwrap();
    assert_eq!(n.validate(50, 3).unwrap(), n.validate(50, 3).unwrap());
}

#[test]
fn single_precision_evaluator() {
    let n = Norm::<f32, 3>::new(NormSpec::power(4.0)).unwrap();
    let v = n.value(&[1.0, 1.0, 1.0]).unwrap();
    assert!((v - 3f32.powf(0.25)).abs() < 1e-6);
    let rep = n.validate(100, 1).unwrap();
    assert!(rep.euler_residual < 1e-5);
}

#[test]
fn two_dimensional_families() {
    let n = Norm::<f64, 2>::new(NormSpec::power(3.0)).unwrap();
    assert!(n.validate(200, 2).unwrap().pass);
    let c = Norm::<f64, 2>::new(NormSpec::cube(6, 0.05)).unwrap();
    assert!(c.validate(200, 2).unwrap().pass);
}

fn any_direction() -> impl Strategy<Value = [f64; 3]> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
        .prop_filter("nonzero", |(a, b, c)| a * a + b * b + c * c > 1e-4)
        .prop_map(|(a, b, c)| [a, b, c])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn homogeneity(xi in any_direction(), family in 0usize..6) {
        let n = &families()[family];
        let f = n.value(&xi).unwrap();
        for t in [-2.0, 0.5, 10.0] {
            let ft = n.value(&linalg::scale(&xi, t)).unwrap();
            prop_assert!((ft - f64::abs(t) * f).abs() <= 1e-12 * f64::abs(t) * f);
        }
    }

    #[test]
    fn euler_and_kernel(xi in any_direction(), family in 0usize..6) {
        let n = &families()[family];
        let (f, g, h) = n.second_order(&xi);
        prop_assert!((linalg::dot(&g, &xi) - f).abs() < 1e-9 * f);
        let e = linalg::normalize(&xi);
        prop_assert!(linalg::norm(&linalg::matvec(&h, &e)) < 1e-9 * linalg::frobenius_norm(&h).max(1.0));
    }

    #[test]
    fn duality_identities(xi in any_direction(), family in 0usize..6) {
        let n = &families()[family];
        let (fo, go) = n.dual_first_order(&xi).unwrap();
        prop_assert!((n.value(&go).unwrap() - 1.0).abs() < 1e-6);
        let g = n.gradient(&xi).unwrap();
        prop_assert!((n.dual_value(&g).unwrap() - 1.0).abs() < 1e-6);
        let back = linalg::scale(&n.gradient(&go).unwrap(), fo);
        prop_assert!(linalg::norm(&linalg::sub(&back, &xi)) < 1e-6 * linalg::norm(&xi));
    }

    #[test]
    fn a_p_is_positive_definite(xi in any_direction(), family in 0usize..6, pi in 0usize..3) {
        let p = [1.2, 2.0, 2.8][pi];
        let n = &families()[family];
        let ap = n.a_p_matrix(&xi, p).unwrap();
        prop_assert!(linalg::min_eigenvalue(&ap) > 0.0);
    }
}

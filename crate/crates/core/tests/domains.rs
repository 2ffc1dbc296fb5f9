use std::f64::consts::PI;

use proptest::prelude::*;
use wulffcap::domains::{self, StarDomain};
use wulffcap::linalg;
use wulffcap::norms::{Norm, NormSpec};
use wulffcap::sphere::SphereGrid;
use wulffcap::wulff;
use wulffcap::{Norm3, StarDomain3};

fn power4() -> Norm3 {
    Norm3::new(NormSpec::power(4.0)).unwrap()
}

fn euclid() -> Norm3 {
    Norm3::new(NormSpec::euclidean()).unwrap()
}

/// Surface area of the prolate spheroid with semi-axes (a, a, c), c > a.
fn prolate_area(a: f64, c: f64) -> f64 {
    let e = (1.0 - a * a / (c * c)).sqrt();
    2.0 * PI * a * a * (1.0 + c / (a * e) * e.asin())
}

/// Divergence of `F_ξ(∇φ)` by central differences.
fn fd_mean_curvature(d: &StarDomain3, n: &Norm3, x: &[f64; 3], h: f64) -> f64 {
    (0..3)
        .map(|i| {
            let mut a = *x;
            let mut b = *x;
            a[i] += h;
            b[i] -= h;
            let ga = n.first_order(&d.defining_function(&a).unwrap().1).1;
            let gb = n.first_order(&d.defining_function(&b).unwrap().1).1;
            (ga[i] - gb[i]) / (2.0 * h)
        })
        .sum()
}

#[test]
fn ball_area_and_volume() {
    let b = StarDomain3::ball(1.0).unwrap();
    let s = b.boundary_quadrature(16, 32).unwrap();
    assert!((domains::euclidean_area(&s) - 4.0 * PI).abs() < 1e-6);
    assert!((domains::anisotropic_area(&s, &euclid()) - 4.0 * PI).abs() < 1e-6);
    let grid = SphereGrid::new(16, 32).unwrap();
    let b2 = StarDomain3::ball(2.0).unwrap();
    assert!((b2.volume(&grid).unwrap() - 32.0 * PI / 3.0).abs() < 1e-9);
    assert!(b.boundary_quadrature(3, 32).is_err());
}

#[test]
fn ellipsoid_area_and_volume() {
    let d = StarDomain3::ellipsoid([1.0, 1.0, 2.0]).unwrap();
    let s = d.boundary_quadrature(48, 96).unwrap();
    let area = domains::euclidean_area(&s);
    let exact = prolate_area(1.0, 2.0);
    assert!((area - exact).abs() < 1e-3 * exact, "{area} vs {exact}");
    let e = StarDomain3::ellipsoid([1.0, 1.5, 2.5]).unwrap();
    let v = e.volume(&SphereGrid::new(48, 96).unwrap()).unwrap();
    assert!((v - 4.0 * PI / 3.0 * 3.75).abs() < 1e-6 * v);
}

#[test]
fn wulff_boundary_lies_on_dual_sphere() {
    let n = power4();
    let d = StarDomain3::wulff(1.0, n.clone()).unwrap();
    for s in d.boundary_quadrature(16, 32).unwrap() {
        assert!((n.dual_value(&s.point).unwrap() - 1.0).abs() < 1e-8);
    }
}

#[test]
fn wulff_area_and_volume_scaling() {
    let grid = SphereGrid::new(64, 128).unwrap();
    for n in [power4(), Norm3::new(NormSpec::ellipsoid_diag([1.0, 2.0, 4.0])).unwrap()] {
        let kappa = wulff::kappa(&n, &grid).unwrap();
        let vol = wulff::wulff_volume(&n, &grid).unwrap();
        for r in [0.5, 1.0, 2.0] {
            let d = StarDomain3::wulff(r, n.clone()).unwrap();
            let s = d.boundary_quadrature_on(&grid).unwrap();
            let area = domains::anisotropic_area(&s, &n);
            assert!((area - kappa * r * r).abs() < 5e-3 * area, "{} R={r}: {area}", n.label());
            let v = d.volume(&grid).unwrap();
            assert!((v - vol * r.powi(3)).abs() < 5e-3 * v);
        }
    }
}

#[test]
fn ball_area_under_ellipsoid_norm_converges() {
    let n = Norm3::new(NormSpec::ellipsoid_diag([1.0, 4.0, 9.0])).unwrap();
    let d = StarDomain3::ball(1.0).unwrap();
    let reference = domains::anisotropic_area(&d.boundary_quadrature(128, 256).unwrap(), &n);
    let coarse = domains::anisotropic_area(&d.boundary_quadrature(12, 24).unwrap(), &n);
    assert!((coarse - reference).abs() < 2e-3 * reference);
}

#[test]
fn area_and_volume_converge_at_second_order_or_better() {
    let d = StarDomain3::perturbed_wulff(1.0, 0.1, 3, power4()).unwrap();
    let n = power4();
    let res = [(8, 16), (16, 32), (32, 64), (64, 128)];
    let areas: Vec<f64> = res.iter().map(|&(a, b)| domains::anisotropic_area(&d.boundary_quadrature(a, b).unwrap(), &n)).collect();
    let vols: Vec<f64> = res.iter().map(|&(a, b)| d.volume(&SphereGrid::new(a, b).unwrap()).unwrap()).collect();
    for vals in [&areas, &vols] {
        let e1 = (vals[1] - vals[3]).abs();
        let e2 = (vals[2] - vals[3]).abs();
        assert!(e2 <= e1 / 4.0 || e2 < 1e-12 * vals[3], "{vals:?}");
    }
}

#[test]
fn wulff_shape_is_anisotropically_umbilic() {
    let norms = vec![
        power4(),
        Norm3::new(NormSpec::ellipsoid([[2.0, 0.3, 0.1], [0.3, 1.0, -0.2], [0.1, -0.2, 3.0]])).unwrap(),
        Norm3::new(NormSpec::cube(4, 0.05)).unwrap(),
        euclid(),
    ];
    for n in norms {
        for r in [0.5, 2.0] {
            let d = StarDomain3::wulff(r, n.clone()).unwrap();
            for s in d.boundary_quadrature(6, 12).unwrap() {
                let h = domains::anisotropic_mean_curvature(&n, &s);
                assert!((h - 2.0 / r).abs() < 1e-4, "{}: H = {h}", n.label());
                assert!(domains::anisotropic_pinch(&n, &s).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn two_dimensional_wulff_curvature() {
    let n = Norm::<f64, 2>::new(NormSpec::power(3.0)).unwrap();
    let d = StarDomain::<f64, 2>::wulff(1.5, n.clone()).unwrap();
    for s in d.boundary_quadrature(0, 24).unwrap() {
        assert!((domains::anisotropic_mean_curvature(&n, &s) - 1.0 / 1.5).abs() < 1e-8);
    }
}

#[test]
fn prolate_ellipsoid_curvatures() {
    // (1,1,2): principal curvatures c/a² = 2 twice at the pole, and
    // a/b² = 1, a/c² = 1/4 at the equator point (1,0,0).
    let d = StarDomain3::ellipsoid([1.0, 1.0, 2.0]).unwrap();
    let n = euclid();
    let pole = d.sample(&[0.0, 0.0, 1.0], 1.0).unwrap();
    assert!((pole.point[2] - 2.0).abs() < 1e-15);
    let h = domains::anisotropic_mean_curvature(&n, &pole);
    assert!((h - 4.0).abs() < 1e-12, "{h}");
    assert!((fd_mean_curvature(&d, &n, &pole.point, 1e-4) - 4.0).abs() < 1e-6);

    let eq = d.sample(&[1.0, 0.0, 0.0], 1.0).unwrap();
    let h = domains::anisotropic_mean_curvature(&n, &eq);
    assert!((h - 1.25).abs() < 1e-12, "{h}");
    let pinch = domains::anisotropic_pinch(&n, &eq);
    let expected = 0.5 * (1.0f64 - 0.25).powi(2);
    assert!((pinch - expected).abs() < 1e-12, "{pinch}");
    let k = domains::euclidean_principal_curvatures(&eq);
    assert!((k[0] - 0.25).abs() < 1e-12 && (k[1] - 1.0).abs() < 1e-12);
}

#[test]
fn mean_curvature_matches_finite_difference_divergence() {
    let n = power4();
    let d = StarDomain3::perturbed_wulff(1.0, 0.1, 3, n.clone()).unwrap();
    let norms = [power4(), euclid(), Norm3::new(NormSpec::cube(6, 0.1)).unwrap()];
    // even polar count and azimuth divisible by 4 keep nodes off the coordinate
    // planes, where the ℓ^{4/3} Wulff shape has unbounded curvature
    for s in d.boundary_quadrature(6, 8).unwrap() {
        for m in &norms {
            let h = domains::anisotropic_mean_curvature(m, &s);
            let fd = fd_mean_curvature(&d, m, &s.point, 1e-4);
            assert!((h - fd).abs() < 1e-5 * h.abs().max(1.0), "{}: {h} vs {fd}", m.label());
        }
    }
}

#[test]
fn wulff_inequality_on_test_domains() {
    let grid = SphereGrid::new(48, 96).unwrap();
    let n = power4();
    let w = wulff::wulff_volume(&n, &grid).unwrap();
    let cases = [
        (StarDomain3::wulff(1.0, n.clone()).unwrap(), true),
        (StarDomain3::ellipsoid([1.0, 1.0, 3.0]).unwrap(), false),
        (StarDomain3::perturbed_wulff(1.0, 0.1, 3, n.clone()).unwrap(), false),
        (StarDomain3::ball(1.3).unwrap(), false),
    ];
    for (d, equality) in cases {
        let s = d.boundary_quadrature_on(&grid).unwrap();
        let lhs = domains::anisotropic_area(&s, &n);
        let rhs = 3.0 * w.powf(1.0 / 3.0) * d.volume(&grid).unwrap().powf(2.0 / 3.0);
        assert!(lhs >= rhs * 0.99, "{}", d.label());
        if equality {
            assert!((lhs / rhs - 1.0).abs() < 1e-2);
        }
    }
}

#[test]
fn convexity_detection() {
    let grid = SphereGrid::new(24, 48).unwrap();
    let e = StarDomain3::ellipsoid([1.0, 1.0, 3.0]).unwrap();
    assert!(e.is_convex(&e.boundary_quadrature_on(&grid).unwrap(), 1e-9));
    // a large zonal bump makes the surface saddle-shaped somewhere
    let dented = StarDomain3::perturbed_wulff(1.0, 0.6, 4, euclid()).unwrap();
    assert!(!dented.is_convex(&dented.boundary_quadrature_on(&grid).unwrap(), 1e-9));
}

#[test]
fn invalid_domains_are_rejected() {
    assert!(StarDomain3::ball(0.0).is_err());
    assert!(StarDomain3::ellipsoid([1.0, -1.0, 1.0]).is_err());
    assert!(StarDomain3::perturbed_wulff(1.0, 1.0, 2, euclid()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pinch_nonnegative_on_ellipsoids(a in 0.5..2.0f64, b in 0.5..2.0f64, c in 0.5..3.0f64, family in 0usize..3) {
        let n = [euclid(), power4(), Norm3::new(NormSpec::ellipsoid_diag([1.0, 2.0, 4.0])).unwrap()][family].clone();
        let d = StarDomain3::ellipsoid([a, b, c]).unwrap();
        for s in d.boundary_quadrature(6, 10).unwrap() {
            prop_assert!(domains::anisotropic_pinch(&n, &s) >= -1e-6);
            prop_assert!(domains::anisotropic_mean_curvature(&n, &s) > 0.0);
        }
    }

    #[test]
    fn normals_are_unit_and_weights_positive(amp in -0.3..0.3f64, mode in 1usize..5) {
        let d = StarDomain3::perturbed_wulff(1.0, amp, mode, power4()).unwrap();
        for s in d.boundary_quadrature(6, 10).unwrap() {
            prop_assert!((linalg::norm(&s.normal) - 1.0).abs() < 1e-12);
            prop_assert!(s.weight > 0.0);
            prop_assert!(d.defining_function(&s.point).unwrap().0.abs() < 1e-12);
        }
    }
}

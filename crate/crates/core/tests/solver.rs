use std::sync::Arc;

use wulffcap::norms::{Norm, NormSpec};
use wulffcap::solver::{self, AnnularGrid, GridSpec, PotentialField, SolverConfig};
use wulffcap::sphere::SphereGrid;
use wulffcap::{linalg, wulff, AnnularGrid3, Norm3, StarDomain3};

fn euclid() -> Norm3 {
    Norm3::new(NormSpec::euclidean()).unwrap()
}

fn power4() -> Norm3 {
    Norm3::new(NormSpec::power(4.0)).unwrap()
}

fn spec(n_radial: usize, n_polar: usize, r_out: f64, p: f64) -> GridSpec<f64> {
    GridSpec { n_radial, n_polar, n_azimuth: 2 * n_polar, r_out, decay: Some(wulff::decay_exponent(3, p)) }
}

fn solve(domain: &StarDomain3, norm: &Norm3, p: f64, gs: GridSpec<f64>) -> PotentialField<f64, 3> {
    let grid = AnnularGrid3::build(domain, &gs).unwrap();
    let f = solver::solve_potential(grid, norm, p, &SolverConfig::default()).unwrap();
    assert!(f.report.usable(), "{:#?}", f.report);
    f
}

/// Largest absolute deviation from the closed-form Wulff potential.
fn sup_error(f: &PotentialField<f64, 3>, norm: &Norm3, radius: f64) -> f64 {
    let g = &f.grid;
    let mut err: f64 = 0.0;
    for (v, x) in f.values.iter().zip(&g.positions) {
        let exact = solver::analytic_wulff_potential(norm, f.p, radius, x).unwrap();
        err = err.max((v - exact).abs());
    }
    err
}

#[test]
fn grid_construction() {
    let ball = StarDomain3::ball(1.0).unwrap();
    let g = AnnularGrid3::build(&ball, &spec(64, 32, 8.0, 2.0)).unwrap();
    assert_eq!(g.node_count(), 64 * 2048);
    assert_eq!(g.vertex_count(), 64 * 2050);
    assert!(g.s.windows(2).all(|w| w[1] > w[0]));
    let shell = 4.0 / 3.0 * std::f64::consts::PI * (512.0 - 1.0);
    assert!((g.mesh_volume() - shell).abs() < 0.01 * shell);
    let solid_angle: f64 = g.outer_weights.iter().sum();
    assert!((solid_angle - 4.0 * std::f64::consts::PI).abs() < 1e-12);

    let n = power4();
    let w = StarDomain3::wulff(1.0, n.clone()).unwrap();
    let g = AnnularGrid3::build(&w, &spec(16, 8, 8.0, 1.5)).unwrap();
    for a in 0..g.rays {
        assert!((n.dual_value(&g.positions[g.vertex(0, a)]).unwrap() - 1.0).abs() < 1e-8);
        assert!((linalg::norm(&g.positions[g.vertex(15, a)]) - 8.0).abs() < 1e-12);
    }

    assert!(AnnularGrid3::build(&ball, &spec(16, 8, 1.5, 2.0)).is_err());
    let mut odd = spec(16, 8, 8.0, 2.0);
    odd.n_azimuth = 15;
    assert!(AnnularGrid3::build(&ball, &odd).is_err());
}

#[test]
fn ball_laplace_matches_inverse_radius() {
    let n = euclid();
    let f = solve(&StarDomain3::ball(1.0).unwrap(), &n, 2.0, spec(32, 16, 8.0, 2.0));
    let err = sup_error(&f, &n, 1.0);
    assert!(err < 0.01, "sup error {err}");
    let cap = f.capacity();
    assert!((cap / (4.0 * std::f64::consts::PI) - 1.0).abs() < 0.01, "{cap}");
    assert_eq!(f.report.ray_monotonicity_violations, 0);
}

#[test]
fn power_norm_wulff_potential() {
    let n = power4();
    let f = solve(&StarDomain3::wulff(1.0, n.clone()).unwrap(), &n, 1.5, spec(32, 16, 8.0, 1.5));
    let err = sup_error(&f, &n, 1.0);
    assert!(err < 0.02, "sup error {err}");
    assert_eq!(f.report.ray_monotonicity_violations, 0);
    // a converged solve passes its own gauge with room to spare
    let cfg = SolverConfig::default();
    assert!(f.pde_residual().unwrap() < 10.0 * cfg.gradient_tolerance);
}

#[test]
fn exponent_outside_range_is_rejected() {
    let ball = StarDomain3::ball(1.0).unwrap();
    let n = euclid();
    for p in [3.0, 3.5, 1.0, 0.5] {
        let grid = AnnularGrid3::build(&ball, &spec(8, 4, 8.0, 2.0)).unwrap();
        assert!(solver::solve_potential(grid, &n, p, &SolverConfig::default()).is_err(), "p = {p}");
    }
}

#[test]
fn analytic_potential_values() {
    let e = euclid();
    let x = [0.3, -1.2, 2.0];
    let u = solver::analytic_wulff_potential(&e, 2.0, 1.0, &x).unwrap();
    assert!((u - 1.0 / linalg::norm(&x)).abs() < 1e-14);
    for n in [power4(), e.clone(), Norm3::new(NormSpec::ellipsoid_diag([1.0, 2.0, 4.0])).unwrap()] {
        let y = linalg::scale(&x, 2.0 / n.dual_value(&x).unwrap());
        assert!((solver::analytic_wulff_potential(&n, 1.5, 1.0, &y).unwrap() - 0.125).abs() < 1e-12);
        let r = 1.7;
        let a = solver::analytic_wulff_potential(&n, 2.3, r, &linalg::scale(&y, r)).unwrap();
        let b = solver::analytic_wulff_potential(&n, 2.3, 1.0, &y).unwrap();
        assert!((a - b).abs() < 1e-13);
    }
    assert!(solver::analytic_wulff_potential(&e, 2.0, 1.0, &[0.1, 0.2, 0.3]).is_err());
    assert!(solver::analytic_wulff_potential(&e, 3.0, 1.0, &x).is_err());
}

/// Residual of the sampled exact solution, which carries only the
/// discretization error.
fn sampled_residual(nr: usize, nt: usize) -> f64 {
    let n = power4();
    let p = 1.5;
    let d = StarDomain3::wulff(1.0, n.clone()).unwrap();
    let grid = AnnularGrid3::build(&d, &spec(nr, nt, 8.0, p)).unwrap();
    let vals = grid.positions.iter().map(|x| solver::analytic_wulff_potential(&n, p, 1.0, x).unwrap()).collect();
    PotentialField::from_values(grid, &n, p, vals).unwrap().pde_residual().unwrap()
}

#[test]
fn residual_of_exact_solution_decreases_under_refinement() {
    let r: Vec<f64> = [(12, 6), (24, 12), (48, 24)].iter().map(|&(a, b)| sampled_residual(a, b)).collect();
    for w in r.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order >= 1.0, "observed order {order}: {r:?}");
    }
}

#[test]
fn constant_field_has_zero_residual_but_fails_boundary_check() {
    let n = euclid();
    let grid = AnnularGrid3::build(&StarDomain3::ball(1.0).unwrap(), &spec(8, 4, 8.0, 2.0)).unwrap();
    let ones = vec![1.0; grid.vertex_count()];
    let f = PotentialField::from_values(grid, &n, 2.0, ones).unwrap();
    assert!(f.pde_residual().unwrap() < 1e-12);
    assert!(!f.report.boundary_ok);
    assert!(!f.report.usable());
}

#[test]
fn energy_decreases_across_accepted_steps() {
    let n = Norm3::new(NormSpec::cube(4, 0.1)).unwrap();
    let d = StarDomain3::ellipsoid([1.0, 1.0, 1.5]).unwrap();
    let f = solve(&d, &n, 1.4, spec(20, 8, 8.0, 1.4));
    for st in &f.report.stages {
        assert!(st.energies.windows(2).all(|w| w[1] <= w[0]), "{:?}", st.energies);
    }
    assert!(f.report.max_principle);
}

#[test]
fn comparison_between_nested_wulff_balls() {
    let n = power4();
    let p = 1.8;
    let big = solve(&StarDomain3::wulff(1.2, n.clone()).unwrap(), &n, p, spec(24, 8, 8.0, p));
    let small = solve(&StarDomain3::wulff(1.0, n.clone()).unwrap(), &n, p, spec(24, 8, 8.0, p));
    let g = &big.grid;
    for a in 0..g.rays {
        for i in 0..g.n_radial {
            let r = g.radius(i, a);
            let s = small.ray_value_at_radius(a, r).unwrap();
            assert!(big.value(i, a) >= s - 1e-9, "ray {a} layer {i}");
        }
    }
}

#[test]
fn capacity_scales_with_radius() {
    let n = power4();
    let p = 1.5;
    let caps: Vec<f64> = [0.5, 1.0, 2.0]
        .iter()
        .map(|&r| solve(&StarDomain3::wulff(r, n.clone()).unwrap(), &n, p, spec(32, 12, 8.0, p)).capacity())
        .collect();
    for (r, c) in [0.5f64, 1.0, 2.0].iter().zip(&caps) {
        let expected = r.powf(3.0 - p) * caps[1];
        assert!((c / expected - 1.0).abs() < 0.01, "R = {r}: {c} vs {expected}");
    }
}

#[test]
fn exterior_closure_is_exact_for_wulff_potentials() {
    let n = power4();
    let p = 1.5;
    let d = StarDomain3::wulff(1.0, n.clone()).unwrap();
    let grid = Arc::new(AnnularGrid3::build(&d, &spec(32, 16, 8.0, p)).unwrap());
    let vals: Vec<f64> = grid.positions.iter().map(|x| solver::analytic_wulff_potential(&n, p, 1.0, x).unwrap()).collect();
    let f = PotentialField::from_values(grid.clone(), &n, p, vals).unwrap();
    // the exterior term equals the tail energy k^{p−1} R^{−k} ∫ F°^{−(k+1)p}
    let k = wulff::decay_exponent(3, p);
    let fine = SphereGrid::<f64, 3>::new(64, 128).unwrap();
    let tail = fine.integrate(|t| n.dual_value(t).unwrap().powf(-(k + 1.0) * p)) * k.powf(p - 1.0) * 8f64.powf(-k);
    assert!((f.exterior_energy / tail - 1.0).abs() < 5e-3, "{} vs {tail}", f.exterior_energy);
    // and the outer trace satisfies ∂_r u = −k u / R, up to the error of the
    // one-sided five-point difference on 32 radial nodes
    let grads = f.nodal_gradients();
    let last = grid.n_radial - 1;
    for a in 0..grid.angular_count() {
        let dr = linalg::dot(&grads[last * grid.angular_count() + a], &grid.ray_dirs[a]);
        let u = f.value(last, a);
        assert!((dr + k * u / 8.0).abs() < 2e-2 * k * u / 8.0, "ray {a}: {dr} vs {}", -k * u / 8.0);
    }
}

#[test]
fn two_dimensional_disk() {
    let n = Norm::<f64, 2>::new(NormSpec::power(3.0)).unwrap();
    let d = wulffcap::StarDomain2::wulff(1.0, n.clone()).unwrap();
    let p = 1.5;
    let gs = GridSpec { n_radial: 48, n_polar: 0, n_azimuth: 64, r_out: 8.0, decay: Some(wulff::decay_exponent(2, p)) };
    let grid = AnnularGrid::build(&d, &gs).unwrap();
    let f = solver::solve_potential(grid, &n, p, &SolverConfig::default()).unwrap();
    assert!(f.report.usable());
    let kappa = wulff::kappa(&n, &SphereGrid::new(0, 512).unwrap()).unwrap();
    let exact = wulff::wulff_capacity(kappa, 2, p, 1.0);
    assert!((f.capacity() / exact - 1.0).abs() < 0.01, "{} vs {exact}", f.capacity());
    for (v, x) in f.values.iter().zip(&f.grid.positions) {
        assert!((v - solver::analytic_wulff_potential(&n, p, 1.0, x).unwrap()).abs() < 0.01);
    }
}

#[test]
fn solves_are_deterministic_across_thread_counts() {
    let n = power4();
    let d = StarDomain3::perturbed_wulff(1.0, 0.1, 3, n.clone()).unwrap();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| solve(&d, &n, 1.7, spec(16, 8, 8.0, 1.7)).values)
    };
    let a = run(1);
    assert_eq!(a, run(3));
    assert_eq!(a, run(1));
}

#[test]
fn dump_round_trip() {
    let n = euclid();
    let f = solve(&StarDomain3::ball(1.0).unwrap(), &n, 2.0, spec(8, 4, 8.0, 2.0));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("u.bin");
    f.write_dump(&path).unwrap();
    let (dim, radial, rays, vals) = solver::read_dump(&path).unwrap();
    assert_eq!((dim, radial, rays), (3, 8, f.grid.rays));
    assert_eq!(vals, f.values);
    std::fs::write(&path, b"garbage").unwrap();
    assert!(solver::read_dump(&path).is_err());
}

#[test]
fn single_precision_solve() {
    let n = Norm::<f32, 3>::new(NormSpec::euclidean()).unwrap();
    let d = wulffcap::domains::StarDomain::<f32, 3>::ball(1.0).unwrap();
    let gs = GridSpec { n_radial: 16, n_polar: 8, n_azimuth: 16, r_out: 8.0f32, decay: Some(1.0) };
    let grid = AnnularGrid::build(&d, &gs).unwrap();
    let cfg = SolverConfig { gradient_tolerance: 1e-3, ..SolverConfig::default() };
    let f = solver::solve_potential(grid, &n, 2.0f32, &cfg).unwrap();
    assert!(f.report.usable(), "{:#?}", f.report);
    assert!((f.capacity() / (4.0 * std::f32::consts::PI) - 1.0).abs() < 0.03);
}

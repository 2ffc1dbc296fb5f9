//! Exterior anisotropic `p`-capacitary potential.
//!
//! Minimizes `∫ F(∇u)^p` over P1 fields on an [`AnnularGrid`] with `u = 1` on
//! `∂Ω`, closing the outer boundary with the exact energy of the Wulff-radial
//! continuation. A regularization `(F² + δ²)^{p/2}` is driven to zero by
//! continuation; each stage is solved by a truncated Newton method whose
//! linear systems use conjugate gradients preconditioned by the exact
//! Hessian blocks along radial lines.

mod energy;
pub mod mesh;

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::Serialize;

use crate::linalg::Vector;
use crate::norms::Norm;
use crate::wulff;
use crate::{Error, Real, Result};
use energy::Problem;
pub use mesh::{lagrange_derivative_weights, lagrange_weights, radial_parameters, AnnularGrid, GridSpec};

/// Numerical controls for [`solve_potential`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolverConfig {
    /// First regularization, relative to the boundary gradient scale `k/ρ_max`.
    pub delta_initial: f64,
    /// Last regularization, relative to the smallest expected gradient
    /// `k/R_out (ρ_min/R_out)^k`, so that it stays negligible on the whole
    /// annulus even when `p` is close to 1.
    pub delta_final: f64,
    /// Ratio between successive regularization stages.
    pub delta_factor: f64,
    /// Lower bound on the last regularization, relative to `k/ρ_max`. Far
    /// gradients below this scale are only resolved to the accuracy of the
    /// regularized problem.
    pub delta_floor: f64,
    /// Stop when the preconditioned gradient norm relative to `√E` falls
    /// below this in the final stage.
    pub gradient_tolerance: f64,
    /// Same criterion for intermediate stages.
    pub stage_tolerance: f64,
    /// Stop a stage when one Newton step lowers the energy by less than this
    /// fraction.
    pub energy_tolerance: f64,
    pub max_newton_iterations: usize,
    pub max_cg_iterations: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            delta_initial: 1e-2,
            delta_final: 1e-6,
            delta_factor: 0.01,
            delta_floor: 1e-12,
            gradient_tolerance: 1e-7,
            stage_tolerance: 1e-4,
            energy_tolerance: 1e-14,
            max_newton_iterations: 200,
            max_cg_iterations: 2000,
        }
    }
}

/// Progress of one regularization stage.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageReport {
    pub delta: f64,
    pub newton_iterations: usize,
    pub cg_iterations: usize,
    pub energy: f64,
    pub residual: f64,
    /// Energy after each accepted step, starting from the stage's initial state.
    pub energies: Vec<f64>,
}

/// Convergence and validity diagnostics of a solve.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveReport {
    pub stages: Vec<StageReport>,
    pub newton_iterations: usize,
    pub cg_iterations: usize,
    /// Preconditioned gradient norm relative to `√E` at the end.
    pub residual: f64,
    pub converged: bool,
    /// `0 < u ≤ 1` at every vertex.
    pub max_principle: bool,
    /// Vertices whose value exceeds the inner neighbour on the same ray.
    pub ray_monotonicity_violations: usize,
    pub outer_min: f64,
    pub outer_max: f64,
    /// The outer trace is strictly between 0 and 1, so the exterior closure
    /// is active and the field is not the trivial constant.
    pub boundary_ok: bool,
}

impl SolveReport {
    /// Whether downstream functionals may use the field.
    pub fn usable(&self) -> bool {
        self.converged && self.max_principle && self.boundary_ok
    }
}

/// Nodal values of a capacitary potential together with its grid and norm.
#[derive(Clone, Debug)]
pub struct PotentialField<T, const N: usize> {
    pub grid: Arc<AnnularGrid<T, N>>,
    pub norm: Norm<T, N>,
    pub p: T,
    /// One value per vertex, `layer * rays + ray`.
    pub values: Vec<T>,
    /// `∫_{annulus} F(∇u)^p` at zero regularization.
    pub interior_energy: T,
    /// Energy of the Wulff-radial continuation beyond `R_out`.
    pub exterior_energy: T,
    pub report: SolveReport,
}

fn check_exponent<T: Real, const N: usize>(p: T) -> Result<T> {
    let n = T::of_usize(N);
    if !(p > T::one() && p < n) {
        return Err(Error::Precondition(format!("the capacitary problem requires 1 < p < n = {N}, got p = {p}")));
    }
    Ok(wulff::decay_exponent(N, p))
}

fn outer_coefficients<T: Real, const N: usize>(grid: &AnnularGrid<T, N>, norm: &Norm<T, N>, p: T, k: T) -> Result<Vec<T>> {
    let n = T::of_usize(N);
    let scale = k.powf(p - T::one()) * grid.r_out.powf(n - p);
    let mut c = vec![T::zero(); grid.rays];
    for a in 0..grid.rays {
        let fo = norm.dual_value(&grid.ray_dirs[a])?;
        c[a] = scale * fo.powf(-p) * grid.outer_weights[a];
    }
    Ok(c)
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |s, (x, y)| s + *x * *y)
}

struct Pcg<T> {
    r: Vec<T>,
    z: Vec<T>,
    p: Vec<T>,
    q: Vec<T>,
}

impl<T: Real> Pcg<T> {
    fn new(n: usize) -> Self {
        Self { r: vec![T::zero(); n], z: vec![T::zero(); n], p: vec![T::zero(); n], q: vec![T::zero(); n] }
    }

    /// Approximately solves `H x = b` from `x = 0`; returns the iteration count.
    fn solve<const N: usize>(
        &mut self,
        prob: &Problem<'_, T, N>,
        h: &energy::Hessian<T>,
        pre: &energy::LinePreconditioner<T>,
        b: &[T],
        x: &mut [T],
        rtol: T,
        max_iter: usize,
    ) -> usize {
        let rays = prob.grid.rays;
        x.iter_mut().for_each(|v| *v = T::zero());
        self.r.copy_from_slice(b);
        pre.apply(rays, &self.r, &mut self.z);
        self.p.copy_from_slice(&self.z);
        let mut rz = dot(&self.r, &self.z);
        let target = rz.abs() * rtol * rtol;
        for it in 0..max_iter {
            if rz.abs() <= target || rz == T::zero() {
                return it;
            }
            prob.hess_vec(h, &self.p, &mut self.q);
            let pq = dot(&self.p, &self.q);
            if !(pq > T::zero()) {
                return it;
            }
            let alpha = rz / pq;
            for i in 0..x.len() {
                x[i] = x[i] + alpha * self.p[i];
                self.r[i] = self.r[i] - alpha * self.q[i];
            }
            pre.apply(rays, &self.r, &mut self.z);
            let rz_new = dot(&self.r, &self.z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..x.len() {
                self.p[i] = self.z[i] + beta * self.p[i];
            }
        }
        max_iter
    }
}

/// Preconditioned gradient norm `√(gᵀ M⁻¹ g / E)` with `M` the radial
/// line blocks of the Hessian at `u`.
fn scaled_residual<T: Real, const N: usize>(prob: &Problem<'_, T, N>, u: &[T], delta: T, g: &[T], energy: T) -> T {
    let h = prob.hessian(u, delta);
    let pre = prob.line_preconditioner(&h);
    let mut z = vec![T::zero(); g.len()];
    pre.apply(prob.grid.rays, g, &mut z);
    (dot(g, &z).max(T::zero()) / energy.abs().max(T::min_positive_value())).sqrt()
}

/// `u0 = (|x| / ρ(θ))^{−k}`, exact for Wulff-shaped boundaries.
fn initial_guess<T: Real, const N: usize>(grid: &AnnularGrid<T, N>, k: T) -> Vec<T> {
    let mut u = Vec::with_capacity(grid.vertex_count());
    for i in 0..grid.n_radial {
        for a in 0..grid.rays {
            u.push((grid.radius(i, a) / grid.rho[a]).powf(-k));
        }
    }
    u
}

/// Solves the exterior capacitary problem for `Ω` on `grid`.
///
/// Requires `1 < p < n`. A solve that exhausts its iteration budget still
/// returns the field, with `report.converged = false`.
pub fn solve_potential<T: Real, const N: usize>(
    grid: impl Into<Arc<AnnularGrid<T, N>>>,
    norm: &Norm<T, N>,
    p: T,
    config: &SolverConfig,
) -> Result<PotentialField<T, N>> {
    let grid = grid.into();
    let k = check_exponent::<T, N>(p)?;
    if !(config.delta_factor > 0.0 && config.delta_factor < 1.0) || !(config.delta_final > 0.0 && config.delta_initial > 0.0 && config.delta_floor >= 0.0) {
        return Err(Error::InvalidSpec("regularization schedule must decrease".into()));
    }
    let outer = outer_coefficients(&grid, norm, p, k)?;
    let prob = Problem { grid: &grid, norm, p, k, outer };
    let nv = grid.vertex_count();
    let mut u = initial_guess(&grid, k);
    let mut g = vec![T::zero(); nv];
    let mut d = vec![T::zero(); nv];
    let mut trial = vec![T::zero(); nv];
    let mut pcg = Pcg::new(nv);
    let g0 = (k / grid.rho_max).f64();
    let g_far = (k / grid.r_out * (grid.rho_min / grid.r_out).powf(k)).f64();
    let floor = T::min_positive_value().sqrt().f64().max(config.delta_floor * g0);

    let mut deltas = Vec::new();
    let last_delta = (config.delta_final * g_far).max(floor).min(config.delta_initial * g0);
    let mut delta = config.delta_initial * g0;
    while delta > last_delta * (1.0 + 1e-9) {
        deltas.push(delta);
        delta *= config.delta_factor;
    }
    deltas.push(last_delta);

    let mut stages = Vec::new();
    let (mut total_newton, mut total_cg) = (0usize, 0usize);
    let mut residual = T::infinity();
    let mut converged = false;
    for (si, delta) in deltas.iter().enumerate() {
        let last = si + 1 == deltas.len();
        let delta = T::of(*delta);
        let tol = T::of(if last { config.gradient_tolerance } else { config.stage_tolerance });
        let (mut newton, mut cg) = (0usize, 0usize);
        let mut e = prob.energy_gradient(&u, delta, &mut g);
        let mut energies = vec![e.f64()];
        let mut stage_done = false;
        while total_newton < config.max_newton_iterations {
            let h = prob.hessian(&u, delta);
            let pre = prob.line_preconditioner(&h);
            pre.apply(grid.rays, &g, &mut trial);
            residual = (dot(&g, &trial).max(T::zero()) / e).sqrt();
            if residual <= tol {
                stage_done = true;
                break;
            }
            let rhs: Vec<T> = g.iter().map(|v| -*v).collect();
            let forcing = T::of(0.1).min(residual.sqrt()).max(T::of(1e-6));
            cg += pcg.solve(&prob, &h, &pre, &rhs, &mut d, forcing, config.max_cg_iterations);
            let slope = dot(&g, &d);
            if !(slope < T::zero()) {
                // fall back to the preconditioned steepest descent direction
                pre.apply(grid.rays, &rhs, &mut d);
            }
            let slope = dot(&g, &d);
            let mut alpha = T::one();
            let mut accepted = false;
            for _ in 0..40 {
                for i in 0..nv {
                    trial[i] = u[i] + alpha * d[i];
                }
                let et = prob.energy(&trial, delta);
                if et <= e + T::of(1e-4) * alpha * slope {
                    accepted = true;
                    break;
                }
                alpha = alpha * T::of(0.5);
            }
            newton += 1;
            total_newton += 1;
            if !accepted {
                stage_done = residual <= T::of(10.0) * tol;
                break;
            }
            std::mem::swap(&mut u, &mut trial);
            let e_new = prob.energy_gradient(&u, delta, &mut g);
            let drop = (e - e_new) / e.abs();
            e = e_new;
            energies.push(e.f64());
            if drop < T::of(config.energy_tolerance) {
                residual = scaled_residual(&prob, &u, delta, &g, e);
                stage_done = residual <= T::of(10.0) * tol;
                break;
            }
        }
        total_cg += cg;
        stages.push(StageReport {
            delta: delta.f64(),
            newton_iterations: newton,
            cg_iterations: cg,
            energy: e.f64(),
            residual: residual.f64(),
            energies,
        });
        if last {
            converged = stage_done;
        }
    }

    let (interior_energy, exterior_energy) = prob.energy_parts(&u, T::zero());
    let report = diagnostics(&grid, &u, stages, total_newton, total_cg, residual.f64(), converged);
    Ok(PotentialField { grid, norm: norm.clone(), p, values: u, interior_energy, exterior_energy, report })
}

/// Builds the annular grid around `domain` and solves on it. A missing decay
/// hint in `spec` is filled in from `p`.
pub fn solve_domain<T: Real, const N: usize>(
    domain: &crate::domains::StarDomain<T, N>,
    norm: &Norm<T, N>,
    p: T,
    spec: &GridSpec<T>,
    config: &SolverConfig,
) -> Result<PotentialField<T, N>> {
    let k = check_exponent::<T, N>(p)?;
    let spec = GridSpec { decay: spec.decay.or(Some(k)), ..*spec };
    let grid = AnnularGrid::build(domain, &spec)?;
    solve_potential(grid, norm, p, config)
}

fn diagnostics<T: Real, const N: usize>(
    grid: &AnnularGrid<T, N>,
    u: &[T],
    stages: Vec<StageReport>,
    newton_iterations: usize,
    cg_iterations: usize,
    residual: f64,
    converged: bool,
) -> SolveReport {
    // Absolute slack on both bounds: when p is near 1 the exact far field is
    // far below the solver tolerance and may come out as tiny negatives.
    let slack = T::of(1e-9);
    let max_principle = u.iter().all(|v| *v >= -slack && *v <= T::one() + slack);
    let rays = grid.rays;
    let mut violations = 0;
    for i in 1..grid.n_radial {
        for a in 0..rays {
            if u[i * rays + a] > u[(i - 1) * rays + a] + slack {
                violations += 1;
            }
        }
    }
    let outer = &u[(grid.n_radial - 1) * rays..];
    let outer_min = outer.iter().fold(f64::INFINITY, |m, v| m.min(v.f64()));
    let outer_max = outer.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.f64()));
    SolveReport {
        stages,
        newton_iterations,
        cg_iterations,
        residual,
        converged,
        max_principle,
        ray_monotonicity_violations: violations,
        outer_min,
        outer_max,
        boundary_ok: outer_min >= -1e-9 && outer_max < 1.0 - 1e-6,
    }
}

/// Capacitary potential of the Wulff ball `{F° < R}`:
/// `u(x) = (F°(x)/R)^{−k}` with `k = (n−p)/(p−1)`, for `F°(x) ≥ R`.
pub fn analytic_wulff_potential<T: Real, const N: usize>(norm: &Norm<T, N>, p: T, radius: T, x: &Vector<T, N>) -> Result<T> {
    let k = check_exponent::<T, N>(p)?;
    let fo = norm.dual_value(x)?;
    if fo < radius * (T::one() - T::of(1e-12)) {
        return Err(Error::Precondition(format!("point lies inside the Wulff ball: F°(x) = {fo} < R = {radius}")));
    }
    Ok((fo / radius).powf(-k))
}

impl<T: Real, const N: usize> PotentialField<T, N> {
    /// Wraps given nodal values (for instance a sampled analytic solution),
    /// evaluating the discrete energies and diagnostics.
    pub fn from_values(grid: impl Into<Arc<AnnularGrid<T, N>>>, norm: &Norm<T, N>, p: T, values: Vec<T>) -> Result<Self> {
        let grid = grid.into();
        let k = check_exponent::<T, N>(p)?;
        if values.len() != grid.vertex_count() {
            return Err(Error::Precondition(format!(
                "expected {} nodal values, got {}",
                grid.vertex_count(),
                values.len()
            )));
        }
        let outer = outer_coefficients(&grid, norm, p, k)?;
        let prob = Problem { grid: &grid, norm, p, k, outer };
        let (interior_energy, exterior_energy) = prob.energy_parts(&values, T::zero());
        let report = diagnostics(&grid, &values, Vec::new(), 0, 0, f64::NAN, true);
        Ok(Self { grid, norm: norm.clone(), p, values, interior_energy, exterior_energy, report })
    }

    /// Discrete capacity `∫ F(∇u)^p` over the whole exterior.
    pub fn capacity(&self) -> T {
        self.interior_energy + self.exterior_energy
    }

    /// `Cap^{1/(p−1)}`, the coefficient of the fundamental solution in the
    /// asymptotics of `u`.
    pub fn gamma(&self) -> T {
        self.capacity().powf(T::one() / (self.p - T::one()))
    }

    pub fn decay(&self) -> T {
        wulff::decay_exponent(N, self.p)
    }

    #[inline]
    pub fn value(&self, layer: usize, ray: usize) -> T {
        self.values[layer * self.grid.rays + ray]
    }

    /// Values along one ray, inner to outer.
    pub fn ray_values(&self, ray: usize) -> Vec<T> {
        (0..self.grid.n_radial).map(|i| self.value(i, ray)).collect()
    }

    /// Cubic interpolation weights in `s` around the parameter `s0`.
    fn cubic_stencil(&self, s0: T) -> ([usize; 4], [T; 4]) {
        let m = self.grid.n_radial;
        let s = &self.grid.s;
        let upper = s.partition_point(|v| *v < s0).clamp(1, m - 1);
        let start = (upper as isize - 2).clamp(0, m as isize - 4) as usize;
        let idx = [start, start + 1, start + 2, start + 3];
        let nodes: Vec<f64> = idx.iter().map(|&i| s[i].f64()).collect();
        let w = lagrange_weights(&nodes, s0.f64());
        (idx, [T::of(w[0]), T::of(w[1]), T::of(w[2]), T::of(w[3])])
    }

    /// `u` at radius `r` on a ray, by cubic interpolation in the radial
    /// parameter; `None` outside `[ρ(θ), R_out]`.
    pub fn ray_value_at_radius(&self, ray: usize, r: T) -> Option<T> {
        let rho = self.grid.rho[ray];
        let s0 = (r - rho) / (self.grid.r_out - rho);
        if !(s0 >= T::zero() && s0 <= T::one()) {
            return None;
        }
        let (idx, w) = self.cubic_stencil(s0);
        Some(idx.iter().zip(&w).fold(T::zero(), |acc, (i, wi)| acc + *wi * self.value(*i, ray)))
    }

    /// Radial parameter `s` where the ray first crosses the level `u = t`,
    /// located by bracketing and refined by bisection on the cubic
    /// interpolant; `None` when the level is not reached on the ray.
    pub fn ray_level_parameter(&self, ray: usize, t: T) -> Option<T> {
        let m = self.grid.n_radial;
        let j = (0..m - 1).find(|&i| self.value(i, ray) >= t && self.value(i + 1, ray) < t)?;
        let eval = |s0: T| {
            let (idx, w) = self.cubic_stencil(s0);
            idx.iter().zip(&w).fold(T::zero(), |acc, (i, wi)| acc + *wi * self.value(*i, ray))
        };
        let (mut lo, mut hi) = (self.grid.s[j], self.grid.s[j + 1]);
        for _ in 0..60 {
            let mid = T::of(0.5) * (lo + hi);
            if eval(mid) >= t {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(T::of(0.5) * (lo + hi))
    }

    /// Interpolates per-vertex ray data (layout `layer * angular + ray`) at
    /// radial parameter `s0`.
    pub fn interpolate_ray_data(&self, data: &[Vector<T, N>], ray: usize, s0: T) -> Vector<T, N> {
        let n_ang = self.grid.angular_count();
        let (idx, w) = self.cubic_stencil(s0);
        let mut out = [T::zero(); N];
        for (i, wi) in idx.iter().zip(&w) {
            let v = &data[*i * n_ang + ray];
            for d in 0..N {
                out[d] = out[d] + *wi * v[d];
            }
        }
        out
    }

    /// Cartesian gradients at quadrature-ray vertices, see
    /// [`AnnularGrid::nodal_gradients`].
    pub fn nodal_gradients(&self) -> Vec<Vector<T, N>> {
        self.grid.nodal_gradients(&self.values)
    }

    /// Independent residual gauge: the preconditioned discrete gradient of the
    /// unregularized energy over interior layers, relative to `√E`.
    pub fn pde_residual(&self) -> Result<T> {
        let k = self.decay();
        let outer = outer_coefficients(&self.grid, &self.norm, self.p, k)?;
        let prob = Problem { grid: &self.grid, norm: &self.norm, p: self.p, k, outer };
        let mut g = vec![T::zero(); self.values.len()];
        let e = prob.energy_gradient(&self.values, T::zero(), &mut g);
        let rays = self.grid.rays;
        let outer_start = (self.grid.n_radial - 1) * rays;
        g[outer_start..].iter_mut().for_each(|v| *v = T::zero());
        // unregularized weights; the floor only guards cells with ∇u = 0
        let delta = T::min_positive_value().sqrt();
        Ok(scaled_residual(&prob, &self.values, delta, &g, e))
    }

    /// Writes the nodal values as a binary dump: the 8-byte magic
    /// `WCAPFLD1`, then little-endian `u32` dimension, radial count and
    /// rays per layer, then the values as little-endian `f64` in layer-major
    /// order.
    pub fn write_dump(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(DUMP_MAGIC)?;
        for v in [N as u32, self.grid.n_radial as u32, self.grid.rays as u32] {
            f.write_all(&v.to_le_bytes())?;
        }
        for v in &self.values {
            f.write_all(&v.f64().to_le_bytes())?;
        }
        f.flush()?;
        Ok(())
    }
}

const DUMP_MAGIC: &[u8; 8] = b"WCAPFLD1";

/// Reads a dump written by [`PotentialField::write_dump`], returning the
/// dimension, radial count, rays per layer and values.
pub fn read_dump(path: &Path) -> Result<(usize, usize, usize, Vec<f64>)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 20 || &bytes[..8] != DUMP_MAGIC {
        return Err(Error::Io("not a field dump".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[8 + 4 * i..12 + 4 * i].try_into().unwrap()) as usize;
    let (dim, radial, rays) = (word(0), word(1), word(2));
    let body = &bytes[20..];
    if body.len() != 8 * radial * rays {
        return Err(Error::Io("truncated field dump".into()));
    }
    let values = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok((dim, radial, rays, values))
}

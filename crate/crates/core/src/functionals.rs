//! Capacity estimates, the level-set functional `Φ_{p,q}`, and the harness
//! for the Minkowski-type inequalities.
//!
//! Level-set integrals are evaluated ray by ray. Every level set
//! `{u = t}` of a potential on the annular grid is a radial graph
//! `x = R_t(θ) θ`, and on it
//!
//! ```text
//! F(ν) dσ = F(∇u) R_t^{n−1} / (−∂_r u) dθ,
//! ```
//!
//! so surface integrals reduce to sphere quadrature once `R_t` and `∇u` are
//! interpolated along each ray.

use serde::Serialize;

use crate::domains::{self, StarDomain};
use crate::linalg::{self, Vector};
use crate::norms::Norm;
use crate::solver::{GridSpec, PotentialField, SolverConfig};
use crate::sphere::SphereGrid;
use crate::{solver, wulff, Error, Real, Result};

/// How the exterior part of the energy beyond `R_out` was estimated.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TailEstimate {
    pub method: String,
    /// Least-squares coefficient of `Γ_{F,p}` fitted to the outer trace.
    pub gamma_fit: f64,
    pub value: f64,
}

/// Energy and flux estimates of the capacity of one solve.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CapacityResult {
    pub cap_energy: f64,
    /// Primary estimate.
    pub cap_flux: f64,
    /// `|cap_flux − cap_energy| / cap_flux`.
    pub discrepancy: f64,
    /// `cap_flux^{1/(p−1)}`.
    pub gamma: f64,
    pub p: f64,
    pub norm: String,
    pub domain: String,
    pub tail: TailEstimate,
}

fn require_usable<T: Real, const N: usize>(field: &PotentialField<T, N>) -> Result<()> {
    if field.report.usable() {
        Ok(())
    } else {
        Err(Error::Precondition(format!(
            "the potential is not usable (converged: {}, maximum principle: {}, boundary check: {})",
            field.report.converged, field.report.max_principle, field.report.boundary_ok
        )))
    }
}

/// `∫_{|x| > R} F^p(∇Γ) dx` for the fundamental solution
/// `Γ = κ^{−1/(p−1)} F°^{−k} / k`.
fn fundamental_tail<T: Real, const N: usize>(norm: &Norm<T, N>, p: T, kappa: T, r_out: T, sphere: &SphereGrid<T, N>) -> Result<T> {
    let k = wulff::decay_exponent(N, p);
    let s = sphere.try_integrate(|t| Ok(norm.dual_value(t)?.powf(-(k + T::one()) * p)))?;
    Ok(kappa.powf(-p / (p - T::one())) * r_out.powf(-k) / k * s)
}

/// Interior energy `Σ |T| F^p(∇u)` plus the tail of `γ̂ Γ_{F,p}` beyond
/// `R_out`, with `γ̂` fitted to the outer trace by weighted least squares.
pub fn capacity_energy<T: Real, const N: usize>(field: &PotentialField<T, N>) -> Result<(T, TailEstimate)> {
    require_usable(field)?;
    let g = &field.grid;
    let p = field.p;
    let k = field.decay();
    let kappa = wulff::kappa(&field.norm, &g.sphere)?;
    let c = kappa.powf(-T::one() / (p - T::one())) / k;
    let last = g.n_radial - 1;
    let (mut num, mut den) = (T::zero(), T::zero());
    for a in 0..g.rays {
        let gamma = c * (g.r_out * field.norm.dual_value(&g.ray_dirs[a])?).powf(-k);
        num = num + g.outer_weights[a] * field.value(last, a) * gamma;
        den = den + g.outer_weights[a] * gamma * gamma;
    }
    let gamma_fit = num / den;
    let tail = gamma_fit.powf(p) * fundamental_tail(&field.norm, p, kappa, g.r_out, &g.sphere)?;
    let estimate = TailEstimate {
        method: "least-squares fit of the fundamental solution to the outer trace".into(),
        gamma_fit: gamma_fit.f64(),
        value: tail.f64(),
    };
    Ok((field.interior_energy + tail, estimate))
}

/// Weighted level-set integral `Σ_a w_a F(∇u)^e R^{n−1}/(−∂_r u)` at the
/// radial parameter `s_a` of each ray, i.e. `∫ F^{e−1}(∇u) F(ν) dσ`.
fn level_integral<T: Real, const N: usize>(
    field: &PotentialField<T, N>,
    grads: &[Vector<T, N>],
    params: &[T],
    exponent: T,
) -> Result<T> {
    let g = &field.grid;
    let mut total = T::zero();
    for (a, s) in params.iter().enumerate() {
        let grad = field.interpolate_ray_data(grads, a, *s);
        let dr = linalg::dot(&grad, &g.ray_dirs[a]);
        if !(dr < T::zero()) {
            return Err(Error::Infeasible(format!("the potential does not decrease along ray {a}")));
        }
        let r = (T::one() - *s) * g.rho[a] + *s * g.r_out;
        let f = field.norm.first_order(&grad).0;
        total = total + g.sphere.weights[a] * f.powf(exponent) * r.powi(N as i32 - 1) / (-dr);
    }
    Ok(total)
}

/// Boundary flux `∫_{∂Ω} F^{p−1}(∇u) F(ν) dσ`, with `∇u` reconstructed at
/// `∂Ω` by one-sided radial differences (it is normal to `∂Ω` because
/// `u ≡ 1` there).
pub fn capacity_flux<T: Real, const N: usize>(field: &PotentialField<T, N>) -> Result<T> {
    require_usable(field)?;
    let g = &field.grid;
    let dr = g.inner_radial_derivative(&field.values);
    let mut total = T::zero();
    for a in 0..g.angular_count() {
        let nu = g.inner_normal[a];
        let grad = linalg::scale(&nu, dr[a] / linalg::dot(&nu, &g.ray_dirs[a]));
        let f = field.norm.first_order(&grad).0;
        total = total + f.powf(field.p - T::one()) * field.norm.first_order(&nu).0 * g.inner_area[a];
    }
    Ok(total)
}

/// Both capacity estimates with their discrepancy.
pub fn capacity<T: Real, const N: usize>(field: &PotentialField<T, N>) -> Result<CapacityResult> {
    let (energy, tail) = capacity_energy(field)?;
    let flux = capacity_flux(field)?.f64();
    let p = field.p.f64();
    Ok(CapacityResult {
        cap_energy: energy.f64(),
        cap_flux: flux,
        discrepancy: (flux - energy.f64()).abs() / flux,
        gamma: flux.powf(1.0 / (p - 1.0)),
        p,
        norm: field.norm.label(),
        domain: field.grid.domain_label.clone(),
        tail,
    })
}

/// Exponent pair `(p, q)` in `Λ = {1 < p < n, q ≥ 1 + 1/p*}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PhiParams {
    pub n: usize,
    pub p: f64,
    pub q: f64,
}

impl PhiParams {
    pub fn new(n: usize, p: f64, q: f64) -> Result<Self> {
        let nf = n as f64;
        if !(p > 1.0 && p < nf) {
            return Err(Error::Precondition(format!("(p, q) requires 1 < p < n = {n}, got p = {p}")));
        }
        let me = Self { n, p, q };
        let qmin = me.q_min();
        if !(q >= qmin * (1.0 - 1e-12)) {
            return Err(Error::Precondition(format!("(p, q) = ({p}, {q}) lies outside Λ: q must be at least 1 + 1/p* = {qmin}")));
        }
        Ok(me)
    }

    /// `p* = (n−1)(p−1)/(n−p)`.
    pub fn p_star(&self) -> f64 {
        let n = self.n as f64;
        (n - 1.0) * (self.p - 1.0) / (n - self.p)
    }

    pub fn q_min(&self) -> f64 {
        1.0 + 1.0 / self.p_star()
    }

    /// `k = (n−p)/(p−1)`.
    pub fn decay(&self) -> f64 {
        (self.n as f64 - self.p) / (self.p - 1.0)
    }
}

/// Limit of `Φ_{p,q}(τ)` as `τ → ∞` in terms of the capacity:
/// `k^{(q−1)p*} κ^{(q−1)(p−1)/(n−p)} Cap^{1−(q−1)(p−1)/(n−p)}`.
pub fn phi_limit(cap: f64, kappa: f64, params: &PhiParams) -> Result<f64> {
    if !(cap > 0.0) {
        return Err(Error::Precondition("the capacity must be positive".into()));
    }
    let n = params.n as f64;
    let e = (params.q - 1.0) * (params.p - 1.0) / (n - params.p);
    Ok(params.decay().powf((params.q - 1.0) * params.p_star()) * kappa.powf(e) * cap.powf(1.0 - e))
}

/// Sampled `Φ_{p,q}` with its monotonicity statistics.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhiCurve {
    pub params: PhiParams,
    pub tau: Vec<f64>,
    pub phi: Vec<f64>,
    /// Value predicted for `τ → ∞` from the flux capacity.
    pub limit: f64,
    /// `max_i [Φ(τ_{i+1}) − Φ(τ_i)]`; positive values are upward violations.
    pub max_increase: f64,
    /// `Φ(1 + h) − Φ(1)` with `h = 0.05`.
    pub difference_at_one: f64,
}

impl PhiCurve {
    pub fn phi_at_one(&self) -> f64 {
        self.phi[0]
    }

    pub fn phi_at_max(&self) -> f64 {
        *self.phi.last().unwrap()
    }

    /// Relative distance of `Φ(τ_max)` from the limit value.
    pub fn limit_gap(&self) -> f64 {
        (self.phi_at_max() - self.limit).abs() / self.limit
    }
}

/// Step of the one-sided difference used for `Φ'(1) ≤ 0`.
pub const PHI_STEP: f64 = 0.05;

/// Largest useful `τ`: the level `1/τ` must be crossed on every ray before
/// `R_out/2`, and `τ` is capped at `10⁴`.
pub fn tau_max<T: Real, const N: usize>(field: &PotentialField<T, N>) -> Result<f64> {
    let g = &field.grid;
    let mut top = T::zero();
    for a in 0..g.angular_count() {
        let v = field.ray_value_at_radius(a, g.r_out * T::of(0.5)).ok_or_else(|| {
            Error::Infeasible("R_out/2 lies inside the domain on some ray".into())
        })?;
        top = top.max(v);
    }
    Ok((1.0 / top.f64()).min(1e4))
}

/// `count` geometrically spaced samples in `[1, tau_max]`.
pub fn tau_grid(tau_max: f64, count: usize) -> Vec<f64> {
    let count = count.max(2);
    (0..count).map(|i| tau_max.powf(i as f64 / (count - 1) as f64)).collect()
}

/// `Φ_{p,q}(τ) = τ^{(q−1)p*} ∫_{u = 1/τ} F^{q(p−1)}(∇u) F(ν) dσ` at the given
/// samples (which must start at `τ = 1` and increase).
pub fn phi_curve<T: Real, const N: usize>(
    field: &PotentialField<T, N>,
    params: &PhiParams,
    taus: &[f64],
    kappa: f64,
) -> Result<PhiCurve> {
    require_usable(field)?;
    if params.n != N || (params.p - field.p.f64()).abs() > 1e-12 {
        return Err(Error::Precondition("Φ parameters do not match the potential".into()));
    }
    if taus.is_empty() || (taus[0] - 1.0).abs() > 1e-12 || taus.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Precondition("τ samples must start at 1 and increase".into()));
    }
    let grads = field.nodal_gradients();
    let eval = |tau: f64| -> Result<f64> {
        let t = T::of(1.0 / tau);
        let n_ang = field.grid.angular_count();
        let mut params_s = Vec::with_capacity(n_ang);
        for a in 0..n_ang {
            let s = if tau == 1.0 {
                T::zero()
            } else {
                field.ray_level_parameter(a, t).ok_or_else(|| {
                    Error::Infeasible(format!("level u = 1/{tau} leaves the annulus on ray {a}"))
                })?
            };
            params_s.push(s);
        }
        let exponent = T::of(params.q * (params.p - 1.0) + 1.0);
        let integral = level_integral(field, &grads, &params_s, exponent)?.f64();
        Ok(tau.powf((params.q - 1.0) * params.p_star()) * integral)
    };
    let phi = taus.iter().map(|t| eval(*t)).collect::<Result<Vec<f64>>>()?;
    let difference_at_one = eval(1.0 + PHI_STEP)? - phi[0];
    let max_increase = phi.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    let flux = capacity_flux(field)?.f64();
    Ok(PhiCurve {
        params: *params,
        tau: taus.to_vec(),
        phi,
        limit: phi_limit(flux, kappa, params)?,
        max_increase: if taus.len() > 1 { max_increase } else { 0.0 },
        difference_at_one,
    })
}

/// One inequality `LHS ≥ RHS` evaluated on a domain.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InequalityRecord {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    /// `ratio − 1`.
    pub margin: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl InequalityRecord {
    fn new(name: &str, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        let ratio = lhs / rhs;
        Self { name: name.into(), lhs, rhs, ratio, margin: ratio - 1.0, tolerance, pass: ratio >= 1.0 - tolerance }
    }
}

/// All inequality records for one `(domain, norm, p, q)` case.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InequalityReport {
    pub domain: String,
    pub norm: String,
    pub params: PhiParams,
    pub kappa: f64,
    pub cap_flux: f64,
    pub anisotropic_area: f64,
    pub volume: f64,
    pub convex: bool,
    pub records: Vec<InequalityRecord>,
    /// Entries not evaluated, with the reason.
    pub skipped: Vec<String>,
    /// Relative gap between `LHS(eq4.09)^q` and `κ · LHS(eq5.11)`, which
    /// are the same quantity.
    pub consistency_gap: f64,
    pub all_pass: bool,
}

impl InequalityReport {
    pub fn record(&self, name: &str) -> Option<&InequalityRecord> {
        self.records.iter().find(|r| r.name == name)
    }
}

/// Quadrature and tolerance for [`verify_inequalities`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VerifyOptions {
    pub polar: usize,
    pub azimuth: usize,
    pub tolerance: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { polar: 64, azimuth: 128, tolerance: 0.02 }
    }
}

/// Evaluates every inequality of the suite on `domain`, using `cap` as the
/// capacity (the flux estimate).
pub fn verify_inequalities<T: Real, const N: usize>(
    domain: &StarDomain<T, N>,
    norm: &Norm<T, N>,
    params: &PhiParams,
    cap: &CapacityResult,
    options: &VerifyOptions,
) -> Result<InequalityReport> {
    if N < 3 || params.n != N {
        return Err(Error::Precondition(format!("the inequality suite needs n ≥ 3 and matching parameters, got n = {N}")));
    }
    if (cap.p - params.p).abs() > 1e-12 {
        return Err(Error::Precondition("capacity was computed for a different p".into()));
    }
    let grid = SphereGrid::<T, N>::new(options.polar, options.azimuth)?;
    let samples = domain.boundary_quadrature_on(&grid)?;
    let kappa = wulff::kappa(norm, &grid)?.f64();
    let n = N as f64;
    let (p, q) = (params.p, params.q);
    let moment = |s: f64| {
        let s = T::of(s);
        let scale = T::of(1.0 / (n - 1.0));
        domains::curvature_integral(norm, &samples, |h| (h * scale).abs().powf(s)).f64()
    };
    let area = domains::anisotropic_area(&samples, norm).f64();
    let volume = domain.volume(&grid)?.f64();
    let convex = domain.is_convex(&samples, T::of(1e-9));
    let c = ((p - 1.0) / (n - p)).powf(p - 1.0) * cap.cap_flux / kappa;
    let tol = options.tolerance;
    let m_p = moment(p);
    let m_qp = moment(q * (p - 1.0));
    let m_1 = moment(1.0);
    let mut records = vec![
        InequalityRecord::new("eq1.02", m_p / kappa, c.powf((n - p - 1.0) / (n - p)), tol),
        InequalityRecord::new("willmore", moment(n - 1.0), kappa, tol),
        InequalityRecord::new(
            "eq4.09",
            m_qp.powf(1.0 / q),
            ((p - 1.0) / (n - p)).powf(p - 1.0) * cap.cap_flux / area.powf(1.0 - 1.0 / q),
            tol,
        ),
        InequalityRecord::new("eq5.11", m_qp / kappa, c.powf(1.0 - (q - 1.0) * (p - 1.0) / (n - p)), tol),
        InequalityRecord::new("eq1.05", m_1 / kappa, (n * volume / kappa).powf((n - 2.0) / n), tol),
        InequalityRecord::new("wulff", area, n * (kappa / n).powf(1.0 / n) * volume.powf((n - 1.0) / n), tol),
    ];
    let mut skipped = Vec::new();
    if convex {
        records.push(InequalityRecord::new("eq1.03-convex", m_1 / kappa, (area / kappa).powf((n - 2.0) / (n - 1.0)), tol));
    } else {
        skipped.push("eq1.03-convex: the domain is not convex, so the outward-minimising hull is unknown".into());
    }
    let lhs409 = records[2].lhs;
    let lhs511 = records[3].lhs;
    let consistency_gap = (lhs409.powf(q) - kappa * lhs511).abs() / (kappa * lhs511);
    let all_pass = records.iter().all(|r| r.pass);
    Ok(InequalityReport {
        domain: domain.label(),
        norm: norm.label(),
        params: *params,
        kappa,
        cap_flux: cap.cap_flux,
        anisotropic_area: area,
        volume,
        convex,
        records,
        skipped,
        consistency_gap,
        all_pass,
    })
}

/// One row of a capacity sweep over `p`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub p: f64,
    pub cap: f64,
    /// `|∂Ω|_F`, the `p → 1` limit for convex domains.
    pub target: f64,
    pub ratio: f64,
    pub converged: bool,
}

/// Capacity sweep over `p` towards the `p → 1` limit.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepTable {
    pub domain: String,
    pub norm: String,
    /// The target is the `p → 1` limit only for convex (outward-minimising)
    /// domains; otherwise ratios carry no verdict.
    pub convex: bool,
    pub rows: Vec<SweepRow>,
}

/// Solves for every `p` in `p_list` and tabulates `Cap_{F,p}/|∂Ω|_F`.
pub fn capacity_p_sweep<T: Real, const N: usize>(
    domain: &StarDomain<T, N>,
    norm: &Norm<T, N>,
    p_list: &[f64],
    spec: &GridSpec<T>,
    config: &SolverConfig,
    options: &VerifyOptions,
) -> Result<SweepTable> {
    let grid = SphereGrid::<T, N>::new(options.polar, options.azimuth)?;
    let samples = domain.boundary_quadrature_on(&grid)?;
    let target = domains::anisotropic_area(&samples, norm).f64();
    let convex = domain.is_convex(&samples, T::of(1e-9));
    let mut rows = Vec::with_capacity(p_list.len());
    for &p in p_list {
        let spec = GridSpec { decay: None, ..*spec };
        let field = solver::solve_domain(domain, norm, T::of(p), &spec, config)?;
        let cap = capacity_flux(&field)?.f64();
        rows.push(SweepRow { p, cap, target, ratio: cap / target, converged: field.report.converged });
    }
    Ok(SweepTable { domain: domain.label(), norm: norm.label(), convex, rows })
}

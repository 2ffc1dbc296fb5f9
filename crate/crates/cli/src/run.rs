//! Execution of the subcommands on a validated configuration.

use std::time::Instant;

use rayon::prelude::*;
use wulffcap::domains::StarDomain;
use wulffcap::functionals::{self, CapacityResult, PhiParams, VerifyOptions};
use wulffcap::identities::{self, AnalyticField, PointCharges, WulffPotential};
use wulffcap::linalg::{Matrix, Vector};
use wulffcap::norms::{Norm, NormSpec};
use wulffcap::solver::{self, GridSpec, PotentialField};
use wulffcap::sphere::SphereGrid;
use wulffcap::{wulff, Error};

use crate::config::{Check, DomainConfig, GridConfig, NormConfig, RunConfig};
use crate::report::{
    csv_bytes, CapacityCase, DivergenceCase, IdentitiesSummary, PhiSummary, RunReport, SolveSummary, StageTime, WulffExponent, WulffInfo,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    ValidateNorm,
    WulffInfo,
    Capacity,
    Phi,
    Verify,
    SweepP,
    Identities,
    All,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::ValidateNorm => "validate-norm",
            Command::WulffInfo => "wulff-info",
            Command::Capacity => "capacity",
            Command::Phi => "phi",
            Command::Verify => "verify",
            Command::SweepP => "sweep-p",
            Command::Identities => "identities",
            Command::All => "all",
        }
    }

    fn checks(self, cfg: &RunConfig) -> Vec<Check> {
        match self {
            Command::ValidateNorm => vec![Check::Norm],
            Command::WulffInfo => vec![Check::Wulff],
            Command::Capacity => vec![Check::Capacity],
            Command::Phi => vec![Check::Phi],
            Command::Verify => vec![Check::Verify],
            Command::SweepP => vec![Check::Sweep],
            Command::Identities => vec![Check::Identities],
            Command::All => cfg.checks.clone(),
        }
    }
}

/// Errors that make the run itself invalid, as opposed to failed verdicts.
#[derive(Debug)]
pub struct UsageError(pub String);

/// Everything a run produces besides the exit status.
pub struct RunOutput {
    pub report: RunReport,
    /// Extra files: `(name, contents)`.
    pub files: Vec<(String, Vec<u8>)>,
    /// Human-readable lines for stdout.
    pub lines: Vec<String>,
}

pub fn execute(cfg: &RunConfig, command: Command, seed: u64, deterministic: bool) -> Result<RunOutput, UsageError> {
    match cfg.dimension {
        2 => Runner::<2>::new(cfg, command, seed, deterministic)?.run(),
        3 => Runner::<3>::new(cfg, command, seed, deterministic)?.run(),
        n => Err(UsageError(format!("dimension: unsupported value {n}"))),
    }
}

fn vector<const N: usize>(v: &[f64]) -> Vector<f64, N> {
    let mut out = [0.0; N];
    out.copy_from_slice(v);
    out
}

fn norm_spec<const N: usize>(c: &NormConfig) -> NormSpec<f64, N> {
    match c {
        NormConfig::Euclidean {} => NormSpec::euclidean(),
        NormConfig::Ellipsoid { diag: Some(d), .. } => NormSpec::ellipsoid_diag(vector(d)),
        NormConfig::Ellipsoid { matrix, .. } => {
            let rows = matrix.as_ref().expect("validated: diag or matrix");
            let mut m: Matrix<f64, N> = [[0.0; N]; N];
            for (i, r) in rows.iter().enumerate() {
                m[i] = vector(r);
            }
            NormSpec::ellipsoid(m)
        }
        NormConfig::Power { exponent } => NormSpec::power(*exponent),
        NormConfig::SmoothedPolytope { directions, power, blend } => {
            NormSpec::smoothed_polytope(directions.iter().map(|d| vector(d)).collect(), *power, *blend)
        }
        NormConfig::Cube { power, blend } => NormSpec::cube(*power, *blend),
    }
}

fn build_domain<const N: usize>(c: &DomainConfig, norm: &Norm<f64, N>) -> wulffcap::Result<StarDomain<f64, N>> {
    match c {
        DomainConfig::Ball { radius } => StarDomain::ball(*radius),
        DomainConfig::Wulff { radius } => StarDomain::wulff(*radius, norm.clone()),
        DomainConfig::Ellipsoid { semi_axes } => StarDomain::ellipsoid(vector(semi_axes)),
        DomainConfig::PerturbedWulff { radius, amplitude, mode } => StarDomain::perturbed_wulff(*radius, *amplitude, *mode, norm.clone()),
    }
}

fn fmt_p(p: f64) -> String {
    format!("{p}")
}

struct Solved<const N: usize> {
    field: Option<PotentialField<f64, N>>,
    capacity: Option<CapacityResult>,
    error: Option<String>,
    seconds: f64,
}

struct Runner<'a, const N: usize> {
    cfg: &'a RunConfig,
    checks: Vec<Check>,
    seed: u64,
    deterministic: bool,
    norm: Norm<f64, N>,
    domain: StarDomain<f64, N>,
    report: RunReport,
    files: Vec<(String, Vec<u8>)>,
    lines: Vec<String>,
    solved: Option<Vec<Solved<N>>>,
    kappa: Option<f64>,
}

impl<'a, const N: usize> Runner<'a, N> {
    fn new(cfg: &'a RunConfig, command: Command, seed: u64, deterministic: bool) -> Result<Self, UsageError> {
        let norm = Norm::new(norm_spec::<N>(&cfg.norm)).map_err(|e| UsageError(format!("norm: {e}")))?;
        let domain = build_domain(&cfg.domain, &norm).map_err(|e| UsageError(format!("domain: {e}")))?;
        let checks = command.checks(cfg);
        if N < 3 && command == Command::Verify {
            return Err(UsageError(format!("verify: the inequality suite needs dimension at least 3, got {N}")));
        }
        Ok(Self {
            cfg,
            checks,
            seed,
            deterministic,
            norm,
            domain,
            report: RunReport::new(command.name(), cfg.clone(), seed, deterministic),
            files: Vec::new(),
            lines: Vec::new(),
            solved: None,
            kappa: None,
        })
    }

    fn run(mut self) -> Result<RunOutput, UsageError> {
        let start = Instant::now();
        for check in self.checks.clone() {
            match check {
                Check::Norm => self.timed("norm", Self::norm_stage),
                Check::Wulff => self.timed("wulff", Self::wulff_stage),
                Check::Capacity => self.timed("capacity", Self::capacity_stage),
                Check::Phi => self.timed("phi", Self::phi_stage),
                Check::Verify => {
                    if N < 3 {
                        self.report.skipped.push(format!("verify: the inequality suite needs dimension at least 3, got {N}"));
                    } else {
                        self.timed("verify", Self::verify_stage)
                    }
                }
                Check::Sweep => self.timed("sweep", Self::sweep_stage),
                Check::Identities => self.timed("identities", Self::identities_stage),
            }
        }
        self.report.timing.total_seconds = start.elapsed().as_secs_f64();
        Ok(RunOutput { report: self.report, files: self.files, lines: self.lines })
    }

    fn timed(&mut self, stage: &str, f: fn(&mut Self)) {
        let t = Instant::now();
        f(self);
        self.report.timing.stages.push(StageTime { stage: stage.to_string(), seconds: t.elapsed().as_secs_f64() });
    }

    fn verdict(&mut self, check: String, pass: bool, detail: String) {
        self.lines.push(format!("{} {check}: {detail}", if pass { "PASS" } else { "FAIL" }));
        self.report.verdict(check, pass, detail);
    }

    fn kappa(&mut self) -> wulffcap::Result<f64> {
        if let Some(k) = self.kappa {
            return Ok(k);
        }
        let grid = SphereGrid::<f64, N>::new(self.cfg.inequalities.polar, self.cfg.inequalities.azimuth)?;
        let k = wulff::kappa(&self.norm, &grid)?;
        self.kappa = Some(k);
        Ok(k)
    }

    fn grid_spec(&self, g: &GridConfig) -> wulffcap::Result<GridSpec<f64>> {
        let r_out = match g.r_out {
            Some(r) => r,
            None => {
                let sphere = SphereGrid::<f64, N>::new(g.n_polar, g.n_azimuth)?;
                g.r_out_factor * self.domain.radius_range(&sphere)?.1
            }
        };
        Ok(GridSpec { n_radial: g.n_radial, n_polar: g.n_polar, n_azimuth: g.n_azimuth, r_out, decay: None })
    }

    fn norm_stage(&mut self) {
        let samples = self.cfg.norm_check.samples;
        match self.norm.validate(samples, self.seed) {
            Ok(r) => {
                let residual = r.euler_residual.max(r.hessian_kernel_residual).max(r.unit_sphere_residual).max(r.inversion_residual);
                let detail = format!(
                    "{}: max identity residual {residual:.3e} (tolerance {:.0e}), min ellipticity {:.3e} over {samples} samples",
                    r.norm, r.tolerance, r.min_ellipticity
                );
                let pass = r.pass;
                self.report.norm_validation = Some(r);
                self.verdict("norm-validation".into(), pass, detail);
            }
            Err(e) => self.verdict("norm-validation".into(), false, e.to_string()),
        }
    }

    fn wulff_stage(&mut self) {
        let inner = || -> wulffcap::Result<WulffInfo> {
            let (polar, azimuth) = (self.cfg.inequalities.polar, self.cfg.inequalities.azimuth);
            let data = wulff::wulff_data(&self.norm, polar, azimuth)?;
            let exponents = self
                .cfg
                .p
                .iter()
                .map(|&p| WulffExponent {
                    p,
                    decay: wulff::decay_exponent(N, p),
                    capacity: wulff::wulff_capacity(data.kappa, N, p, 1.0),
                    capacity_over_kappa: wulff::wulff_capacity(1.0, N, p, 1.0),
                })
                .collect();
            Ok(WulffInfo { norm: self.norm.label(), volume: data.volume, kappa: data.kappa, polar, azimuth, exponents })
        };
        match inner() {
            Ok(info) => {
                let detail = format!("{}: |W| = {:.8}, kappa = {:.8}", info.norm, info.volume, info.kappa);
                let pass = info.kappa > 0.0 && info.kappa.is_finite();
                self.kappa = Some(info.kappa);
                for e in &info.exponents {
                    self.lines.push(format!("  p = {}: k = {:.6}, Cap(W_1) = {:.8}, Cap/kappa = {:.8}", e.p, e.decay, e.capacity, e.capacity_over_kappa));
                }
                self.report.wulff = Some(info);
                self.verdict("wulff-info".into(), pass, detail);
            }
            Err(e) => self.verdict("wulff-info".into(), false, e.to_string()),
        }
    }

    /// Solves once per configured `p`; later stages reuse the fields.
    fn solve_all(&mut self) {
        if self.solved.is_some() {
            return;
        }
        let spec = match self.grid_spec(&self.cfg.grid) {
            Ok(s) => s,
            Err(e) => {
                let msg = e.to_string();
                self.solved = Some(self.cfg.p.iter().map(|_| Solved { field: None, capacity: None, error: Some(msg.clone()), seconds: 0.0 }).collect());
                return;
            }
        };
        let config = self.cfg.solver.to_config();
        let solve = |p: &f64| {
            let t = Instant::now();
            let out = solver::solve_domain(&self.domain, &self.norm, *p, &spec, &config);
            let seconds = t.elapsed().as_secs_f64();
            match out {
                Ok(field) => {
                    let (capacity, error) = if field.report.usable() {
                        match functionals::capacity(&field) {
                            Ok(c) => (Some(c), None),
                            Err(e) => (None, Some(e.to_string())),
                        }
                    } else {
                        (None, Some(unusable(&field)))
                    };
                    Solved { field: Some(field), capacity, error, seconds }
                }
                Err(e) => Solved { field: None, capacity: None, error: Some(e.to_string()), seconds },
            }
        };
        let solved: Vec<Solved<N>> =
            if self.deterministic { self.cfg.p.iter().map(solve).collect() } else { self.cfg.p.par_iter().map(solve).collect() };
        for (p, s) in self.cfg.p.iter().zip(&solved) {
            self.report.timing.stages.push(StageTime { stage: format!("solve p={}", fmt_p(*p)), seconds: s.seconds });
        }
        self.solved = Some(solved);
    }

    fn capacity_stage(&mut self) {
        self.solve_all();
        let kappa = self.kappa();
        let solved = self.solved.take().expect("solved above");
        let (cons_tol, an_tol) = (self.cfg.capacity.consistency_tolerance, self.cfg.capacity.analytic_tolerance);
        for (&p, s) in self.cfg.p.iter().zip(&solved) {
            let analytic = match (&kappa, self.cfg.wulff_radius()) {
                (Ok(k), Some(r)) => Some(wulff::wulff_capacity(*k, N, p, r)),
                _ => None,
            };
            let relative_error = match (&s.capacity, analytic) {
                (Some(c), Some(a)) => Some(c.cap_flux / a - 1.0),
                _ => None,
            };
            let (pass, detail) = match &s.capacity {
                Some(c) => {
                    let consistent = c.discrepancy < cons_tol;
                    let accurate = relative_error.map_or(true, |e| e.abs() < an_tol);
                    let mut d = format!("cap_flux {:.8}, cap_energy {:.8}, discrepancy {:.3e}", c.cap_flux, c.cap_energy, c.discrepancy);
                    if let (Some(a), Some(e)) = (analytic, relative_error) {
                        d.push_str(&format!(", closed form {a:.8}, relative error {e:+.3e}"));
                    }
                    (consistent && accurate, d)
                }
                None => (false, s.error.clone().unwrap_or_default()),
            };
            self.report.capacities.push(CapacityCase {
                p,
                solve: s.field.as_ref().map(SolveSummary::of),
                result: s.capacity.clone(),
                analytic,
                relative_error,
                pass,
                error: s.error.clone(),
            });
            self.verdict(format!("capacity p={}", fmt_p(p)), pass, detail);
        }
        self.solved = Some(solved);
    }

    fn phi_stage(&mut self) {
        self.solve_all();
        let kappa = match self.kappa() {
            Ok(k) => k,
            Err(e) => return self.verdict("phi".into(), false, e.to_string()),
        };
        let solved = self.solved.take().expect("solved above");
        let tau_cfg = self.cfg.tau.clone();
        for (&p, s) in self.cfg.p.iter().zip(&solved) {
            for &q in &self.cfg.q {
                let name = format!("phi p={} q={}", fmt_p(p), fmt_p(q));
                let curve = || -> wulffcap::Result<_> {
                    let field = s.field.as_ref().filter(|f| f.report.usable()).ok_or_else(|| {
                        Error::Precondition(s.error.clone().unwrap_or_else(|| "no usable potential".into()))
                    })?;
                    let params = PhiParams::new(N, p, q)?;
                    let t_max = match tau_cfg.max {
                        Some(m) => m,
                        None => functionals::tau_max(field)?,
                    };
                    functionals::phi_curve(field, &params, &functionals::tau_grid(t_max, tau_cfg.count), kappa)
                };
                let summary = match curve() {
                    Ok(c) => {
                        let phi1 = c.phi_at_one();
                        let rise = c.max_increase / phi1;
                        let d1 = c.difference_at_one / phi1;
                        let gap = c.limit_gap();
                        let pass = rise <= tau_cfg.monotonicity_tolerance && d1 <= tau_cfg.monotonicity_tolerance && gap <= tau_cfg.limit_tolerance;
                        let detail = format!(
                            "Phi(1) {phi1:.8}, max rise {rise:.3e}, difference at 1 {d1:.3e}, limit gap {gap:.3e} at tau_max {:.4e}",
                            c.tau.last().copied().unwrap_or(1.0)
                        );
                        let file = format!("phi_p{}_q{}.csv", fmt_p(p), fmt_p(q));
                        self.files.push((file, csv_bytes(&["tau", "phi"], c.tau.iter().zip(&c.phi).map(|(t, v)| vec![*t, *v]))));
                        self.verdict(name, pass, detail);
                        PhiSummary {
                            p,
                            q,
                            curve: Some(c),
                            relative_increase: Some(rise),
                            relative_difference_at_one: Some(d1),
                            limit_gap: Some(gap),
                            pass,
                            error: None,
                        }
                    }
                    Err(e) => {
                        self.verdict(name, false, e.to_string());
                        PhiSummary {
                            p,
                            q,
                            curve: None,
                            relative_increase: None,
                            relative_difference_at_one: None,
                            limit_gap: None,
                            pass: false,
                            error: Some(e.to_string()),
                        }
                    }
                };
                self.report.phi.push(summary);
            }
        }
        self.solved = Some(solved);
    }

    fn verify_stage(&mut self) {
        self.solve_all();
        let solved = self.solved.take().expect("solved above");
        let ic = &self.cfg.inequalities;
        let options = VerifyOptions { polar: ic.polar, azimuth: ic.azimuth, tolerance: ic.tolerance };
        for (&p, s) in self.cfg.p.iter().zip(&solved) {
            for &q in &self.cfg.q {
                let name = format!("inequalities p={} q={}", fmt_p(p), fmt_p(q));
                let result = s
                    .capacity
                    .as_ref()
                    .ok_or_else(|| Error::Precondition(s.error.clone().unwrap_or_else(|| "no capacity estimate".into())))
                    .and_then(|cap| functionals::verify_inequalities(&self.domain, &self.norm, &PhiParams::new(N, p, q)?, cap, &options));
                match result {
                    Ok(r) => {
                        for rec in &r.records {
                            self.lines.push(format!("  {:<14} ratio {:.6}  margin {:+.3e}", rec.name, rec.ratio, rec.margin));
                        }
                        for skip in &r.skipped {
                            self.lines.push(format!("  skipped {skip}"));
                        }
                        let worst = r.records.iter().map(|x| x.ratio).fold(f64::INFINITY, f64::min);
                        let detail = format!("{} records, smallest ratio {worst:.6} (tolerance {})", r.records.len(), options.tolerance);
                        let pass = r.all_pass;
                        self.report.inequalities.push(r);
                        self.verdict(name, pass, detail);
                    }
                    Err(e) => self.verdict(name, false, e.to_string()),
                }
            }
        }
        self.solved = Some(solved);
    }

    fn sweep_stage(&mut self) {
        let ic = &self.cfg.inequalities;
        let options = VerifyOptions { polar: ic.polar, azimuth: ic.azimuth, tolerance: ic.tolerance };
        let result = self.grid_spec(&self.cfg.sweep.grid).and_then(|spec| {
            functionals::capacity_p_sweep(&self.domain, &self.norm, &self.cfg.sweep.p, &spec, &self.cfg.solver.to_config(), &options)
        });
        match result {
            Ok(t) => {
                for r in &t.rows {
                    self.lines.push(format!("  p = {}: cap {:.8}, target {:.8}, ratio {:.6}", r.p, r.cap, r.target, r.ratio));
                }
                self.files.push(("sweep.csv".into(), csv_bytes(&["p", "cap", "target", "ratio"], t.rows.iter().map(|r| vec![r.p, r.cap, r.target, r.ratio]))));
                let pass = t.rows.iter().all(|r| r.converged);
                let detail = format!("{} exponents, all converged: {pass}, convex domain: {}", t.rows.len(), t.convex);
                self.report.sweep = Some(t);
                self.verdict("sweep-p".into(), pass, detail);
            }
            Err(e) => self.verdict("sweep-p".into(), false, e.to_string()),
        }
    }

    fn identities_stage(&mut self) {
        let ic = self.cfg.identities.clone();
        let mut summary = IdentitiesSummary { richardson_ok: true, ..Default::default() };
        let mut failures = Vec::new();
        for &p in &self.cfg.p {
            match identities::kato_suite(&self.norm, p, ic.kato_samples, self.seed) {
                Ok(k) => {
                    summary.max_kato_residual = summary.max_kato_residual.max(k.max());
                    summary.kato.push(k);
                }
                Err(e) => failures.push(format!("kato p={}: {e}", fmt_p(p))),
            }
            for &q in &self.cfg.q {
                let params = match PhiParams::new(N, p, q) {
                    Ok(x) => x,
                    Err(e) => {
                        failures.push(e.to_string());
                        continue;
                    }
                };
                match identities::check_sign_fields(&self.norm, &params, ic.lambda, ic.sign_samples, self.seed) {
                    Ok(r) => {
                        summary.sign_violations += r.theta_violations + r.div_x_violations + r.div_y_violations;
                        summary.signs.push(r);
                    }
                    Err(e) => failures.push(format!("signs p={} q={}: {e}", fmt_p(p), fmt_p(q))),
                }
                let mut fields: Vec<(String, Box<dyn AnalyticField<f64, N>>)> =
                    vec![("wulff".into(), Box::new(WulffPotential { norm: self.norm.clone(), p, radius: 1.0 }))];
                if N >= 3 && p == 2.0 && matches!(self.cfg.norm, NormConfig::Euclidean {}) {
                    fields.push(("point_charges".into(), Box::new(point_charges::<N>())));
                }
                for (label, field) in fields {
                    let probes = if label == "wulff" {
                        identities::wulff_probes(&self.norm, 1.0, &ic.probe_radii, ic.probes, self.seed)
                    } else {
                        identities::wulff_probes(&self.norm, 1.0, &ic.probe_radii, ic.probes, self.seed).map(|v| {
                            v.into_iter().map(|x| x.map(|c| 2.0 * c)).collect()
                        })
                    };
                    let result = probes.and_then(|pr| identities::check_div_identities(field.as_ref(), &self.norm, &params, ic.lambda, &pr));
                    match result {
                        Ok(r) => {
                            summary.max_divergence_residual = summary.max_divergence_residual.max(r.max());
                            summary.richardson_ok &= r.richardson_ok;
                            summary.divergence.push(DivergenceCase { field: format!("{label} p={} q={}", fmt_p(p), fmt_p(q)), report: r });
                        }
                        Err(e) => failures.push(format!("divergence {label} p={} q={}: {e}", fmt_p(p), fmt_p(q))),
                    }
                }
            }
        }
        self.lines.push(format!("max Kato residual: {:.3e}", summary.max_kato_residual));
        self.lines.push(format!("max divergence residual: {:.3e}", summary.max_divergence_residual));
        self.lines.push(format!("sign violations: {}", summary.sign_violations));
        let kato_ok = !summary.kato.is_empty() && summary.max_kato_residual < ic.kato_tolerance;
        let div_ok = summary.max_divergence_residual < ic.divergence_tolerance && summary.richardson_ok;
        let sign_ok = !summary.signs.is_empty() && summary.sign_violations == 0;
        let pass = failures.is_empty() && kato_ok && div_ok && sign_ok;
        let mut detail = format!(
            "Kato {:.3e} (< {:.0e}), divergence {:.3e} (< {:.0e}), {} sign violations in {} states",
            summary.max_kato_residual,
            ic.kato_tolerance,
            summary.max_divergence_residual,
            ic.divergence_tolerance,
            summary.sign_violations,
            summary.signs.iter().map(|s| s.samples).sum::<usize>()
        );
        if !failures.is_empty() {
            detail.push_str(&format!("; errors: {}", failures.join("; ")));
        }
        self.report.identities = Some(summary);
        self.verdict("identities".into(), pass, detail);
    }
}

fn unusable<const N: usize>(field: &PotentialField<f64, N>) -> String {
    let r = &field.report;
    format!(
        "solve not usable (converged: {}, maximum principle: {}, boundary check: {}, residual {:.3e})",
        r.converged, r.max_principle, r.boundary_ok, r.residual
    )
}

/// A unit charge at the origin and a half charge next to it; harmonic away
/// from them, with non-umbilic level sets.
fn point_charges<const N: usize>() -> PointCharges<f64, N> {
    let mut b = [0.0; N];
    b[0] = 0.4;
    b[N - 1] = 0.1;
    PointCharges { charges: vec![([0.0; N], 1.0), (b, 0.5)] }
}

//! Machine-readable run report and atomic file output.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use wulffcap::functionals::{CapacityResult, InequalityReport, PhiCurve, SweepTable};
use wulffcap::identities::{DivReport, KatoSummary, SignReport};
use wulffcap::norms::NormValidationReport;
use wulffcap::solver::{PotentialField, SolveReport};

use crate::config::RunConfig;

/// Bumped whenever a field of [`RunReport`] changes meaning or disappears.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub tool_version: &'static str,
    pub command: String,
    pub seed: u64,
    pub deterministic: bool,
    pub config: RunConfig,
    pub norm_validation: Option<NormValidationReport>,
    pub wulff: Option<WulffInfo>,
    pub capacities: Vec<CapacityCase>,
    pub phi: Vec<PhiSummary>,
    pub inequalities: Vec<InequalityReport>,
    pub sweep: Option<SweepTable>,
    pub identities: Option<IdentitiesSummary>,
    /// Requested stages that do not apply to this configuration.
    pub skipped: Vec<String>,
    pub verdicts: Vec<Verdict>,
    pub pass: bool,
    /// Wall-clock seconds; the only field that varies between identical runs.
    pub timing: Timing,
}

impl RunReport {
    pub fn new(command: &str, config: RunConfig, seed: u64, deterministic: bool) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            seed,
            deterministic,
            config,
            norm_validation: None,
            wulff: None,
            capacities: Vec::new(),
            phi: Vec::new(),
            inequalities: Vec::new(),
            sweep: None,
            identities: None,
            skipped: Vec::new(),
            verdicts: Vec::new(),
            pass: true,
            timing: Timing::default(),
        }
    }

    pub fn verdict(&mut self, check: impl Into<String>, pass: bool, detail: impl Into<String>) {
        self.pass &= pass;
        self.verdicts.push(Verdict { check: check.into(), pass, detail: detail.into() });
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Verdict {
    pub check: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Timing {
    pub stages: Vec<StageTime>,
    pub total_seconds: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct StageTime {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct WulffInfo {
    pub norm: String,
    pub volume: f64,
    pub kappa: f64,
    pub polar: usize,
    pub azimuth: usize,
    pub exponents: Vec<WulffExponent>,
}

/// Closed-form quantities of the unit Wulff ball for one exponent.
#[derive(Clone, Debug, Serialize)]
pub struct WulffExponent {
    pub p: f64,
    /// `k = (n−p)/(p−1)`.
    pub decay: f64,
    pub capacity: f64,
    /// `Cap/κ = k^{p−1}`.
    pub capacity_over_kappa: f64,
}

/// Convergence summary of one solve, without the per-step histories.
#[derive(Clone, Debug, Serialize)]
pub struct SolveSummary {
    pub n_radial: usize,
    pub n_polar: usize,
    pub n_azimuth: usize,
    pub r_out: f64,
    pub stages: usize,
    pub newton_iterations: usize,
    pub cg_iterations: usize,
    pub residual: f64,
    pub converged: bool,
    pub max_principle: bool,
    pub boundary_ok: bool,
    pub ray_monotonicity_violations: usize,
    pub outer_min: f64,
    pub outer_max: f64,
}

impl SolveSummary {
    pub fn of<const N: usize>(field: &PotentialField<f64, N>) -> Self {
        let g = &field.grid;
        let r: &SolveReport = &field.report;
        Self {
            n_radial: g.n_radial,
            n_polar: g.sphere.polar,
            n_azimuth: g.sphere.azimuth,
            r_out: g.r_out,
            stages: r.stages.len(),
            newton_iterations: r.newton_iterations,
            cg_iterations: r.cg_iterations,
            residual: r.residual,
            converged: r.converged,
            max_principle: r.max_principle,
            boundary_ok: r.boundary_ok,
            ray_monotonicity_violations: r.ray_monotonicity_violations,
            outer_min: r.outer_min,
            outer_max: r.outer_max,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CapacityCase {
    pub p: f64,
    pub solve: Option<SolveSummary>,
    pub result: Option<CapacityResult>,
    /// Closed-form capacity when the domain is a Wulff ball of the norm.
    pub analytic: Option<f64>,
    /// `cap_flux / analytic − 1`.
    pub relative_error: Option<f64>,
    pub pass: bool,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PhiSummary {
    pub p: f64,
    pub q: f64,
    pub curve: Option<PhiCurve>,
    /// `max_increase / Φ(1)`.
    pub relative_increase: Option<f64>,
    /// `(Φ(1+h) − Φ(1)) / Φ(1)`.
    pub relative_difference_at_one: Option<f64>,
    pub limit_gap: Option<f64>,
    pub pass: bool,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct DivergenceCase {
    pub field: String,
    pub report: DivReport,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct IdentitiesSummary {
    pub kato: Vec<KatoSummary>,
    pub max_kato_residual: f64,
    pub signs: Vec<SignReport>,
    pub sign_violations: usize,
    pub divergence: Vec<DivergenceCase>,
    pub max_divergence_residual: f64,
    pub richardson_ok: bool,
}

/// Writes `bytes` to `dir/name` through a temporary file in the same
/// directory, so readers never observe a partial file.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> std::io::Result<PathBuf> {
    let path = dir.join(name);
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(&path).map_err(|e| e.error)?;
    Ok(path)
}

/// CSV document with the given header and rows.
pub fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(row.iter().map(|v| v.to_string())).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

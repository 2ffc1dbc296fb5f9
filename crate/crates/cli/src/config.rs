//! Run configuration: a TOML document with nested sections. Every section
//! rejects unknown keys, and every semantic check names the offending key.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wulffcap::functionals::PhiParams;
use wulffcap::solver::SolverConfig;

/// A configuration problem, reported with the key it concerns.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

fn err<T>(key: &str, msg: impl fmt::Display) -> Result<T, ConfigError> {
    Err(ConfigError(format!("{key}: {msg}")))
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum NormConfig {
    Euclidean {},
    /// Either `diag` or the full `matrix`.
    Ellipsoid {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        diag: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        matrix: Option<Vec<Vec<f64>>>,
    },
    Power {
        exponent: f64,
    },
    SmoothedPolytope {
        directions: Vec<Vec<f64>>,
        power: u32,
        blend: f64,
    },
    /// Smoothed polytope on the coordinate axes.
    Cube {
        power: u32,
        blend: f64,
    },
}

impl Default for NormConfig {
    fn default() -> Self {
        NormConfig::Euclidean {}
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainConfig {
    Ball { radius: f64 },
    /// Wulff ball of the configured norm.
    Wulff { radius: f64 },
    Ellipsoid { semi_axes: Vec<f64> },
    /// Wulff ball with a zonal bump `1 + amplitude·Y_mode`.
    PerturbedWulff { radius: f64, amplitude: f64, mode: usize },
}

impl Default for DomainConfig {
    fn default() -> Self {
        DomainConfig::Wulff { radius: 1.0 }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub n_radial: usize,
    pub n_polar: usize,
    pub n_azimuth: usize,
    /// Outer radius as a multiple of the largest domain radius.
    pub r_out_factor: f64,
    /// Absolute outer radius; overrides `r_out_factor`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_out: Option<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { n_radial: 64, n_polar: 32, n_azimuth: 64, r_out_factor: 8.0, r_out: None }
    }
}

impl GridConfig {
    fn coarse() -> Self {
        Self { n_radial: 32, n_polar: 16, n_azimuth: 32, ..Self::default() }
    }

    fn validate(&self, key: &str) -> Result<(), ConfigError> {
        if self.n_radial < 3 {
            return err(&format!("{key}.n_radial"), "need at least 3 nodes per ray");
        }
        if self.n_polar < 2 {
            return err(&format!("{key}.n_polar"), "need at least 2 rings");
        }
        if self.n_azimuth < 4 || self.n_azimuth % 2 != 0 {
            return err(&format!("{key}.n_azimuth"), "must be even and at least 4");
        }
        if !(self.r_out_factor > 1.0 && self.r_out_factor.is_finite()) {
            return err(&format!("{key}.r_out_factor"), "must exceed 1");
        }
        if let Some(r) = self.r_out {
            if !(r > 0.0 && r.is_finite()) {
                return err(&format!("{key}.r_out"), "must be positive");
            }
        }
        Ok(())
    }
}

/// Mirror of [`SolverConfig`] with every field optional.
#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub delta_initial: f64,
    pub delta_final: f64,
    pub delta_factor: f64,
    pub delta_floor: f64,
    pub gradient_tolerance: f64,
    pub stage_tolerance: f64,
    pub energy_tolerance: f64,
    pub max_newton_iterations: usize,
    pub max_cg_iterations: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        let c = SolverConfig::default();
        Self {
            delta_initial: c.delta_initial,
            delta_final: c.delta_final,
            delta_factor: c.delta_factor,
            delta_floor: c.delta_floor,
            gradient_tolerance: c.gradient_tolerance,
            stage_tolerance: c.stage_tolerance,
            energy_tolerance: c.energy_tolerance,
            max_newton_iterations: c.max_newton_iterations,
            max_cg_iterations: c.max_cg_iterations,
        }
    }
}

impl SolverSection {
    pub fn to_config(&self) -> SolverConfig {
        SolverConfig {
            delta_initial: self.delta_initial,
            delta_final: self.delta_final,
            delta_factor: self.delta_factor,
            delta_floor: self.delta_floor,
            gradient_tolerance: self.gradient_tolerance,
            stage_tolerance: self.stage_tolerance,
            energy_tolerance: self.energy_tolerance,
            max_newton_iterations: self.max_newton_iterations,
            max_cg_iterations: self.max_cg_iterations,
        }
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("delta_initial", self.delta_initial),
            ("delta_final", self.delta_final),
            ("gradient_tolerance", self.gradient_tolerance),
            ("stage_tolerance", self.stage_tolerance),
            ("energy_tolerance", self.energy_tolerance),
        ];
        for (k, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return err(&format!("solver.{k}"), "must be positive");
            }
        }
        if !(self.delta_factor > 0.0 && self.delta_factor < 1.0) {
            return err("solver.delta_factor", "must lie in (0, 1)");
        }
        if !(self.delta_floor >= 0.0 && self.delta_floor.is_finite()) {
            return err("solver.delta_floor", "must be non-negative");
        }
        if self.max_newton_iterations == 0 || self.max_cg_iterations == 0 {
            return err("solver", "iteration limits must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TauConfig {
    /// Number of geometric samples in `[1, τ_max]`.
    pub count: usize,
    /// Upper end of the grid; by default the largest level still inside
    /// the annulus on every ray.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    /// Allowed rise of `Φ` between samples and at `τ = 1`, relative to `Φ(1)`.
    pub monotonicity_tolerance: f64,
    /// Allowed relative gap between `Φ(τ_max)` and its limit value.
    pub limit_tolerance: f64,
}

impl Default for TauConfig {
    fn default() -> Self {
        Self { count: 20, max: None, monotonicity_tolerance: 1e-3, limit_tolerance: 0.03 }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct NormCheckConfig {
    pub samples: usize,
}

impl Default for NormCheckConfig {
    fn default() -> Self {
        Self { samples: 1000 }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct CapacityConfig {
    /// Allowed `|cap_flux − cap_energy| / cap_flux`.
    pub consistency_tolerance: f64,
    /// Allowed relative error against the closed form on Wulff balls.
    pub analytic_tolerance: f64,
}

impl Default for CapacityConfig {
    fn default() -> Self {
        Self { consistency_tolerance: 0.02, analytic_tolerance: 0.02 }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct InequalityConfig {
    /// Boundary quadrature rings and azimuthal nodes.
    pub polar: usize,
    pub azimuth: usize,
    /// A record passes when its ratio is at least `1 − tolerance`.
    pub tolerance: f64,
}

impl Default for InequalityConfig {
    fn default() -> Self {
        Self { polar: 64, azimuth: 128, tolerance: 0.02 }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub p: Vec<f64>,
    pub grid: GridConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { p: vec![1.5, 1.2, 1.05], grid: GridConfig::coarse() }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct IdentitiesConfig {
    /// Constrained states per exponent for the Kato identity.
    pub kato_samples: usize,
    /// States per `(p, q)` pair for the sign checks.
    pub sign_samples: usize,
    pub lambda: f64,
    /// Probe directions per radius for the divergence identities.
    pub probes: usize,
    /// Probe radii, in units of the Wulff radius.
    pub probe_radii: Vec<f64>,
    pub kato_tolerance: f64,
    pub divergence_tolerance: f64,
}

impl Default for IdentitiesConfig {
    fn default() -> Self {
        Self {
            kato_samples: 1000,
            sign_samples: 10_000,
            lambda: 0.5,
            probes: 4,
            probe_radii: vec![1.5, 2.0, 3.0],
            kato_tolerance: 1e-8,
            divergence_tolerance: 1e-6,
        }
    }
}

/// Stages run by the `all` subcommand.
#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum Check {
    Norm,
    Wulff,
    Capacity,
    Phi,
    Verify,
    Sweep,
    Identities,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub dimension: usize,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub seed: u64,
    /// Output directory; not echoed into the report.
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
    pub checks: Vec<Check>,
    pub norm: NormConfig,
    pub domain: DomainConfig,
    pub grid: GridConfig,
    pub solver: SolverSection,
    pub tau: TauConfig,
    pub norm_check: NormCheckConfig,
    pub capacity: CapacityConfig,
    pub inequalities: InequalityConfig,
    pub sweep: SweepConfig,
    pub identities: IdentitiesConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dimension: 3,
            p: vec![2.0],
            q: vec![2.0],
            seed: 0,
            out: None,
            checks: vec![Check::Norm, Check::Wulff, Check::Capacity, Check::Phi, Check::Verify, Check::Sweep, Check::Identities],
            norm: NormConfig::default(),
            domain: DomainConfig::default(),
            grid: GridConfig::default(),
            solver: SolverSection::default(),
            tau: TauConfig::default(),
            norm_check: NormCheckConfig::default(),
            capacity: CapacityConfig::default(),
            inequalities: InequalityConfig::default(),
            sweep: SweepConfig::default(),
            identities: IdentitiesConfig::default(),
        }
    }
}

impl RunConfig {
    /// Parses and validates a configuration document. `origin` names the
    /// source in error messages.
    pub fn parse(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError(format!("{origin}: {e}")))?;
        cfg.validate().map_err(|e| ConfigError(format!("{origin}: {e}")))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let n = self.dimension;
        if n != 2 && n != 3 {
            return err("dimension", format!("supported dimensions are 2 and 3, got {n}"));
        }
        check_exponents("p", &self.p, n)?;
        if self.q.is_empty() {
            return err("q", "at least one value is required");
        }
        for (i, &p) in self.p.iter().enumerate() {
            for (j, &q) in self.q.iter().enumerate() {
                if let Err(e) = PhiParams::new(n, p, q) {
                    return err(&format!("(p[{i}], q[{j}])"), e);
                }
            }
        }
        self.check_norm(n)?;
        self.check_domain(n)?;
        self.grid.validate("grid")?;
        self.solver.validate()?;
        if self.tau.count < 2 {
            return err("tau.count", "need at least 2 samples");
        }
        if let Some(m) = self.tau.max {
            if !(m > 1.0 && m.is_finite()) {
                return err("tau.max", "must exceed 1");
            }
        }
        for (k, v) in [("tau.monotonicity_tolerance", self.tau.monotonicity_tolerance), ("tau.limit_tolerance", self.tau.limit_tolerance)] {
            if !(v >= 0.0) {
                return err(k, "must be non-negative");
            }
        }
        if self.norm_check.samples == 0 {
            return err("norm_check.samples", "must be positive");
        }
        for (k, v) in [
            ("capacity.consistency_tolerance", self.capacity.consistency_tolerance),
            ("capacity.analytic_tolerance", self.capacity.analytic_tolerance),
            ("inequalities.tolerance", self.inequalities.tolerance),
        ] {
            if !(v >= 0.0) {
                return err(k, "must be non-negative");
            }
        }
        if self.inequalities.polar < 2 || self.inequalities.azimuth < 4 || self.inequalities.azimuth % 2 != 0 {
            return err("inequalities", "quadrature needs at least 2 rings and an even azimuthal count of at least 4");
        }
        check_exponents("sweep.p", &self.sweep.p, n)?;
        self.sweep.grid.validate("sweep.grid")?;
        let id = &self.identities;
        if id.kato_samples == 0 || id.sign_samples == 0 || id.probes == 0 {
            return err("identities", "sample counts must be positive");
        }
        if !(id.lambda > 0.0 && id.lambda < 1.0) {
            return err("identities.lambda", format!("must lie in (0, 1), got {}", id.lambda));
        }
        if id.probe_radii.is_empty() || id.probe_radii.iter().any(|r| !(*r > 0.0)) {
            return err("identities.probe_radii", "need at least one positive radius");
        }
        Ok(())
    }

    fn check_norm(&self, n: usize) -> Result<(), ConfigError> {
        match &self.norm {
            NormConfig::Ellipsoid { diag, matrix } => match (diag, matrix) {
                (Some(d), None) => check_len("norm.diag", d, n),
                (None, Some(m)) => {
                    if m.len() != n {
                        return err("norm.matrix", format!("expected {n} rows, got {}", m.len()));
                    }
                    for (i, row) in m.iter().enumerate() {
                        check_len(&format!("norm.matrix[{i}]"), row, n)?;
                    }
                    Ok(())
                }
                _ => err("norm", "an ellipsoid norm needs exactly one of `diag` and `matrix`"),
            },
            NormConfig::SmoothedPolytope { directions, .. } => {
                if directions.is_empty() {
                    return err("norm.directions", "at least one direction is required");
                }
                for (i, d) in directions.iter().enumerate() {
                    check_len(&format!("norm.directions[{i}]"), d, n)?;
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn check_domain(&self, n: usize) -> Result<(), ConfigError> {
        match &self.domain {
            DomainConfig::Ellipsoid { semi_axes } => check_len("domain.semi_axes", semi_axes, n),
            _ => Ok(()),
        }
    }

    /// Whether the domain is the Wulff ball of the configured norm, and its
    /// radius if so.
    pub fn wulff_radius(&self) -> Option<f64> {
        match (&self.domain, &self.norm) {
            (DomainConfig::Wulff { radius }, _) => Some(*radius),
            (DomainConfig::Ball { radius }, NormConfig::Euclidean {}) => Some(*radius),
            _ => None,
        }
    }
}

fn check_len(key: &str, v: &[f64], n: usize) -> Result<(), ConfigError> {
    if v.len() != n {
        return err(key, format!("expected {n} entries for dimension {n}, got {}", v.len()));
    }
    Ok(())
}

fn check_exponents(key: &str, ps: &[f64], n: usize) -> Result<(), ConfigError> {
    if ps.is_empty() {
        return err(key, "at least one value is required");
    }
    for (i, &p) in ps.iter().enumerate() {
        if !(p > 1.0 && p < n as f64) {
            return err(&format!("{key}[{i}]"), format!("p = {p} violates 1 < p < n = {n}"));
        }
    }
    Ok(())
}

//! Scenario configuration.
//!
//! A config is a JSON document with the sections `geometry`,
//! `microstructure`, `physics`, `numerics`, `macro`, `thin` and
//! `experiment`. Every key is optional; missing keys take the CO2 /
//! paperboard defaults below. Unknown keys are rejected.
//!
//! Physical inputs are in cm, s and g/cm^3 and are converted to
//! dimensionless form once, in [`crate::scenario`].

use std::path::Path;

use membrane_core::cell_problem::{AveragingMode, SourceScaling};
use membrane_core::geometry::{MicrostructureSpec, PhysicalGeometry};
use membrane_core::Tensor2;
use serde::{Deserialize, Serialize};

use crate::error::{SimError, SimResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub geometry: GeometryConfig,
    /// `null` removes the obstacles.
    #[serde(default = "default_microstructure")]
    pub microstructure: Option<MicrostructureConfig>,
    pub physics: PhysicsConfig,
    pub numerics: NumericsConfig,
    #[serde(rename = "macro")]
    pub macro_model: MacroConfig,
    pub thin: ThinConfig,
    pub experiment: ExperimentConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            geometry: GeometryConfig::default(),
            microstructure: default_microstructure(),
            physics: PhysicsConfig::default(),
            numerics: NumericsConfig::default(),
            macro_model: MacroConfig::default(),
            thin: ThinConfig::default(),
            experiment: ExperimentConfig::default(),
        }
    }
}

fn default_microstructure() -> Option<MicrostructureConfig> {
    Some(MicrostructureConfig::Rectangle { width_fraction: 0.5, height_fraction: 0.5 })
}

/// Strip dimensions in cm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub ell: f64,
    pub h: f64,
    pub w: f64,
    pub eta: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig { ell: 1.0, h: 0.4, w: 0.25, eta: 0.08 }
    }
}

impl GeometryConfig {
    pub fn physical(&self) -> PhysicalGeometry {
        PhysicalGeometry { ell: self.ell, h: self.h, w: self.w, eta: self.eta }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum MicrostructureConfig {
    Rectangle { width_fraction: f64, height_fraction: f64 },
    Disk { diameter_fraction: f64 },
}

impl MicrostructureConfig {
    pub fn spec(&self) -> MicrostructureSpec {
        match *self {
            MicrostructureConfig::Rectangle { width_fraction, height_fraction } => {
                MicrostructureSpec::Rectangle { width_fraction, height_fraction }
            }
            MicrostructureConfig::Disk { diameter_fraction } => MicrostructureSpec::Disk { diameter_fraction },
        }
    }
}

/// Drift polynomial `p(U)` in physical units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DriftConfig {
    /// `p(U) = -b U (1 - U)`.
    Logistic { b: f64 },
    /// Coefficients `a_1..a_k` of `p(U) = sum a_n U^n`.
    Polynomial(Vec<f64>),
}

impl DriftConfig {
    pub fn coefficients(&self) -> Vec<f64> {
        match self {
            DriftConfig::Logistic { b } => vec![-b, *b],
            DriftConfig::Polynomial(a) => a.clone(),
        }
    }
}

/// A full 2x2 tensor, dimensionless.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorConfig {
    pub d11: f64,
    #[serde(default)]
    pub d12: f64,
    #[serde(default)]
    pub d21: f64,
    pub d22: f64,
}

impl TensorConfig {
    pub fn tensor(&self) -> Tensor2 {
        Tensor2::new(self.d11, self.d12, self.d21, self.d22)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicsConfig {
    /// Diffusivities in cm^2/s.
    pub d1: f64,
    pub d2: f64,
    /// Time scale in s; `null` gives `ell^2 / (4 d1)`.
    pub tau: Option<f64>,
    pub drift: DriftConfig,
    /// Replaces the diagonal tensor built from `d1, d2, tau`.
    pub tensor_override: Option<TensorConfig>,
    /// Concentrations in g/cm^3.
    pub u_left: f64,
    pub u_right: f64,
    /// Source in g/(cm^3 s).
    pub source: f64,
    pub initial: f64,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        PhysicsConfig {
            d1: 10.0,
            d2: 1.0,
            tau: None,
            drift: DriftConfig::Logistic { b: 2.0 },
            tensor_override: None,
            u_left: 0.0,
            u_right: 5.8e-5,
            source: 0.0,
            initial: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AveragingConfig {
    #[default]
    ZeroExtension,
    PoreAverage,
}

impl From<AveragingConfig> for AveragingMode {
    fn from(a: AveragingConfig) -> Self {
        match a {
            AveragingConfig::ZeroExtension => AveragingMode::ZeroExtension,
            AveragingConfig::PoreAverage => AveragingMode::PoreAverage,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SourceScalingConfig {
    #[default]
    SqrtDelta,
    Delta,
    Unit,
}

impl From<SourceScalingConfig> for SourceScaling {
    fn from(s: SourceScalingConfig) -> Self {
        match s {
            SourceScalingConfig::SqrtDelta => SourceScaling::SqrtDelta,
            SourceScalingConfig::Delta => SourceScaling::Delta,
            SourceScalingConfig::Unit => SourceScaling::Unit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NumericsConfig {
    pub cell_nx: usize,
    pub cell_ny: usize,
    /// Cell regularization; `null` uses the numeric value of `eta`.
    pub delta: Option<f64>,
    pub averaging: AveragingConfig,
    pub source_scaling: SourceScalingConfig,
    /// Strip grid for the micro and macro solvers.
    pub nx: usize,
    pub ny: usize,
    /// Fixed time step; `null` uses `min(cfl_safety * CFL, dt_max)`.
    pub dt: Option<f64>,
    pub dt_max: f64,
    pub cfl_safety: f64,
    pub t_end: f64,
    /// Steady when `max |du/dt|` drops below this times the data scale
    /// `max(|u_left|, |u_right|, |initial|)` (or 1 if that is zero).
    pub steady_tol: f64,
    pub solver_rel_tolerance: f64,
    pub solver_abs_tolerance: f64,
    pub solver_max_iterations: Option<usize>,
    /// Snapshot times as fractions of the horizon.
    pub snapshot_fractions: Vec<f64>,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        NumericsConfig {
            cell_nx: 64,
            cell_ny: 64,
            delta: None,
            averaging: AveragingConfig::default(),
            source_scaling: SourceScalingConfig::default(),
            nx: 256,
            ny: 102,
            dt: None,
            dt_max: 0.01,
            cfl_safety: 0.9,
            t_end: 50.0,
            steady_tol: 1e-9,
            solver_rel_tolerance: 1e-10,
            solver_abs_tolerance: 1e-14,
            solver_max_iterations: None,
            snapshot_fractions: vec![0.1, 0.5, 1.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct MacroConfig {
    /// Replaces the cell-problem tensor in the membrane.
    pub effective_override: Option<TensorConfig>,
    /// `[D12, D21]` added to the cell-problem tensor.
    pub off_diagonal: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThinConfig {
    /// Cells per bulk side in `x`.
    pub nx_bulk: usize,
    pub ny: usize,
    /// Profile points per period in `y2`.
    pub points: usize,
    /// Fixed time step; `null` uses `min(numerics.cfl_safety * CFL, dt_max)`.
    pub dt: Option<f64>,
    pub dt_max: f64,
    pub t_end: f64,
    /// Relative to the data scale, as `numerics.steady_tol`.
    pub steady_tol: f64,
    pub coupling_tol: f64,
    pub max_coupling_iterations: usize,
    /// Membrane tensor; `null` uses the bulk tensor.
    pub membrane_tensor: Option<TensorConfig>,
    /// Dimensionless membrane source; `null` uses the scaled physics source.
    pub membrane_source: Option<f64>,
    /// Also solve the strip without a membrane and report the difference.
    pub compare_single_domain: bool,
}

impl Default for ThinConfig {
    fn default() -> Self {
        ThinConfig {
            nx_bulk: 32,
            ny: 20,
            points: 16,
            dt: None,
            dt_max: 0.05,
            t_end: 60.0,
            steady_tol: 1e-9,
            coupling_tol: 1e-10,
            max_coupling_iterations: 500,
            membrane_tensor: None,
            membrane_source: None,
            compare_single_domain: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogRange {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl LogRange {
    pub fn values(&self) -> Vec<f64> {
        membrane_core::cell_problem::log_space(self.lo, self.hi, self.count)
    }
}

/// One run of the drift-strength sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftRun {
    pub b: f64,
    #[serde(default)]
    pub off_diagonal: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub output_dir: String,
    pub deltas: LogRange,
    /// Cell heights in cm, with `delta = eta` per point.
    pub etas: Vec<f64>,
    pub drift_runs: Vec<DriftRun>,
    /// Values of `epsilon = 2 eta / ell`.
    pub eps_levels: Vec<f64>,
    pub converge_nx: usize,
    pub converge_ny: usize,
    pub converge_dt: f64,
    pub converge_t_end: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            output_dir: "out".into(),
            deltas: LogRange { lo: 1e-3, hi: 1.0, count: 20 },
            etas: vec![0.005, 0.01, 0.02, 0.04, 0.08],
            drift_runs: vec![
                DriftRun { b: 2.0, off_diagonal: None },
                DriftRun { b: 10.0, off_diagonal: None },
                DriftRun { b: 54.0, off_diagonal: None },
                DriftRun { b: 54.0, off_diagonal: Some([-0.05, 0.05]) },
            ],
            eps_levels: vec![0.16, 0.08, 0.04],
            converge_nx: 256,
            converge_ny: 160,
            converge_dt: 0.02,
            converge_t_end: 60.0,
        }
    }
}

fn positive(path: &str, v: f64) -> SimResult<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(SimError::config(path, format!("must be positive and finite, got {v}")))
    }
}

fn finite(path: &str, v: f64) -> SimResult<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(SimError::config(path, "must be finite"))
    }
}

fn at_least(path: &str, v: usize, min: usize) -> SimResult<()> {
    if v >= min {
        Ok(())
    } else {
        Err(SimError::config(path, format!("must be at least {min}, got {v}")))
    }
}

fn fraction(path: &str, v: f64) -> SimResult<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(SimError::config(path, format!("must lie strictly inside (0, 1), got {v}")))
    }
}

fn sorted_positive(path: &str, v: &[f64]) -> SimResult<()> {
    for (i, x) in v.iter().enumerate() {
        positive(&format!("{path}[{i}]"), *x)?;
    }
    if v.windows(2).any(|w| w[1] <= w[0]) {
        return Err(SimError::config(path, "values must be strictly increasing"));
    }
    Ok(())
}

fn tensor(path: &str, t: &TensorConfig) -> SimResult<()> {
    t.tensor().check_admissible().map_err(|reason| SimError::config(path, reason))
}

impl ScenarioConfig {
    /// Reads and validates a config file.
    pub fn load(path: &Path) -> SimResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::config("--config", format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> SimResult<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ScenarioConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            SimError::config(path, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// The resolved config with every default filled in.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> SimResult<()> {
        let g = &self.geometry;
        positive("geometry.ell", g.ell)?;
        positive("geometry.h", g.h)?;
        positive("geometry.w", g.w)?;
        positive("geometry.eta", g.eta)?;
        if g.w >= g.ell {
            return Err(SimError::config("geometry.w", "membrane must be narrower than the strip"));
        }
        if g.eta > g.h {
            return Err(SimError::config("geometry.eta", "cell height cannot exceed the strip height"));
        }
        match self.microstructure {
            Some(MicrostructureConfig::Rectangle { width_fraction, height_fraction }) => {
                fraction("microstructure.width_fraction", width_fraction)?;
                fraction("microstructure.height_fraction", height_fraction)?;
            }
            Some(MicrostructureConfig::Disk { diameter_fraction }) => {
                fraction("microstructure.diameter_fraction", diameter_fraction)?;
            }
            None => {}
        }

        let p = &self.physics;
        positive("physics.d1", p.d1)?;
        positive("physics.d2", p.d2)?;
        if let Some(t) = p.tau {
            positive("physics.tau", t)?;
        }
        match &p.drift {
            DriftConfig::Logistic { b } => finite("physics.drift.logistic.b", *b)?,
            DriftConfig::Polynomial(a) => {
                if a.is_empty() {
                    return Err(SimError::config("physics.drift.polynomial", "needs at least one coefficient"));
                }
                for (i, v) in a.iter().enumerate() {
                    finite(&format!("physics.drift.polynomial[{i}]"), *v)?;
                }
            }
        }
        if let Some(t) = &p.tensor_override {
            tensor("physics.tensor_override", t)?;
        }
        for (k, v) in [("u_left", p.u_left), ("u_right", p.u_right), ("source", p.source), ("initial", p.initial)] {
            finite(&format!("physics.{k}"), v)?;
        }

        let n = &self.numerics;
        at_least("numerics.cell_nx", n.cell_nx, 4)?;
        at_least("numerics.cell_ny", n.cell_ny, 4)?;
        if let Some(d) = n.delta {
            positive("numerics.delta", d)?;
        }
        at_least("numerics.nx", n.nx, 2)?;
        at_least("numerics.ny", n.ny, 2)?;
        if let Some(dt) = n.dt {
            positive("numerics.dt", dt)?;
        }
        positive("numerics.dt_max", n.dt_max)?;
        positive("numerics.cfl_safety", n.cfl_safety)?;
        if n.cfl_safety > 1.0 {
            return Err(SimError::config("numerics.cfl_safety", "must not exceed 1"));
        }
        positive("numerics.t_end", n.t_end)?;
        positive("numerics.steady_tol", n.steady_tol)?;
        positive("numerics.solver_rel_tolerance", n.solver_rel_tolerance)?;
        positive("numerics.solver_abs_tolerance", n.solver_abs_tolerance)?;
        if n.solver_max_iterations == Some(0) {
            return Err(SimError::config("numerics.solver_max_iterations", "must be positive"));
        }
        for (i, f) in n.snapshot_fractions.iter().enumerate() {
            if !(*f > 0.0 && *f <= 1.0) {
                return Err(SimError::config(format!("numerics.snapshot_fractions[{i}]"), "must lie in (0, 1]"));
            }
        }

        if let Some(t) = &self.macro_model.effective_override {
            tensor("macro.effective_override", t)?;
        }
        if let Some([a, b]) = self.macro_model.off_diagonal {
            finite("macro.off_diagonal[0]", a)?;
            finite("macro.off_diagonal[1]", b)?;
        }

        let t = &self.thin;
        at_least("thin.nx_bulk", t.nx_bulk, 2)?;
        at_least("thin.ny", t.ny, 2)?;
        at_least("thin.points", t.points, 3)?;
        if let Some(dt) = t.dt {
            positive("thin.dt", dt)?;
        }
        positive("thin.dt_max", t.dt_max)?;
        positive("thin.t_end", t.t_end)?;
        positive("thin.steady_tol", t.steady_tol)?;
        positive("thin.coupling_tol", t.coupling_tol)?;
        at_least("thin.max_coupling_iterations", t.max_coupling_iterations, 1)?;
        if let Some(m) = &t.membrane_tensor {
            tensor("thin.membrane_tensor", m)?;
        }
        if let Some(f) = t.membrane_source {
            finite("thin.membrane_source", f)?;
        }

        let e = &self.experiment;
        if e.output_dir.is_empty() {
            return Err(SimError::config("experiment.output_dir", "must not be empty"));
        }
        positive("experiment.deltas.lo", e.deltas.lo)?;
        positive("experiment.deltas.hi", e.deltas.hi)?;
        at_least("experiment.deltas.count", e.deltas.count, 1)?;
        if e.deltas.hi < e.deltas.lo {
            return Err(SimError::config("experiment.deltas", "hi must not be below lo"));
        }
        sorted_positive("experiment.etas", &e.etas)?;
        for (i, r) in e.drift_runs.iter().enumerate() {
            finite(&format!("experiment.drift_runs[{i}].b"), r.b)?;
        }
        for (i, v) in e.eps_levels.iter().enumerate() {
            positive(&format!("experiment.eps_levels[{i}]"), *v)?;
        }
        at_least("experiment.converge_nx", e.converge_nx, 2)?;
        at_least("experiment.converge_ny", e.converge_ny, 2)?;
        positive("experiment.converge_dt", e.converge_dt)?;
        positive("experiment.converge_t_end", e.converge_t_end)?;
        Ok(())
    }
}

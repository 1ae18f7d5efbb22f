//! Turns a [`ScenarioConfig`] into dimensionless core problems and runs the
//! experiments. Nothing here touches the file system.

use membrane_core::cell_problem::{solve_cell_functions, CellProblemSpec, CellSolution, SweepPoint};
use membrane_core::geometry::{nondimensionalize, DimensionlessGeometry, PhysicalGeometry};
use membrane_core::linear_solver::SolverConfig;
use membrane_core::macro_membrane::{assemble_macro, discrepancy, Discrepancy, MacroProblem, MacroResult, MacroSystem};
use membrane_core::micro_solver::{MicroProblem, MicroSystem, Physics};
use membrane_core::thin_membrane::{MembraneState, ThinMembraneProblem, ThinNumerics, ThinResult, ThinSystem};
use membrane_core::transport::{RunConfig, TransientResult};
use membrane_core::discretization::Discretization;
use membrane_core::{DriftPolynomial, Tensor2};
use rayon::prelude::*;

use crate::config::{DriftConfig, DriftRun, ScenarioConfig};
use crate::error::{SimError, SimResult, SolverContext};

/// Minimum grid rows per periodicity cell in the strip solvers.
pub const MIN_ROWS_PER_CELL: usize = 8;

/// A validated scenario with its dimensionless geometry.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub physical: PhysicalGeometry,
    pub geometry: DimensionlessGeometry,
}

#[derive(Debug, Clone)]
pub struct MicroRun {
    pub system: MicroSystem,
    pub run: RunConfig,
    pub result: TransientResult,
}

#[derive(Debug, Clone)]
pub struct MacroRun {
    pub cell: CellSolution,
    pub problem: MacroProblem,
    pub system: MacroSystem,
    pub run: RunConfig,
    pub result: MacroResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftSweepRow {
    pub drift: DriftRun,
    pub effective: Tensor2,
    pub outflux: f64,
    pub steady: bool,
    pub final_time: f64,
    pub max_mass_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThinSnapshot {
    pub time: f64,
    /// Bulk fields side by side on the `2 nx x ny` grid.
    pub bulk: Vec<f64>,
    pub membrane: MembraneState,
}

#[derive(Debug, Clone)]
pub struct ThinRun {
    pub system: ThinSystem,
    pub result: ThinResult,
    pub snapshots: Vec<ThinSnapshot>,
    /// `max |thin - strip without membrane|` when requested.
    pub single_domain_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergeRow {
    pub epsilon: f64,
    pub eta: f64,
    pub cells: usize,
    pub effective: Tensor2,
    pub discrepancy: Discrepancy,
    pub micro_outflux: f64,
    pub macro_outflux: f64,
    pub micro_steady: bool,
    pub macro_steady: bool,
}

impl Scenario {
    pub fn new(config: ScenarioConfig) -> SimResult<Self> {
        config.validate()?;
        let physical = config.geometry.physical();
        let geometry = nondimensionalize(&physical).map_err(|e| SimError::config("geometry", e.to_string()))?;
        Ok(Scenario { config, physical, geometry })
    }

    pub fn physics(&self) -> Physics {
        let p = &self.config.physics;
        Physics {
            d1: p.d1,
            d2: p.d2,
            tau: p.tau,
            drift: p.drift.coefficients(),
            u_left: p.u_left,
            u_right: p.u_right,
            source: p.source,
            initial: p.initial,
        }
    }

    /// Dimensionless bulk tensor.
    pub fn tensor(&self) -> Tensor2 {
        match &self.config.physics.tensor_override {
            Some(t) => t.tensor(),
            None => self.physics().tensor(self.physical.ell),
        }
    }

    pub fn drift(&self) -> SimResult<DriftPolynomial> {
        self.physics().drift_polynomial(self.physical.ell).map_err(|e| SimError::config("physics.drift", e.to_string()))
    }

    pub fn source(&self) -> f64 {
        self.physics().dimensionless_source(self.physical.ell)
    }

    pub fn solver(&self) -> SolverConfig {
        let n = &self.config.numerics;
        SolverConfig {
            rel_tolerance: n.solver_rel_tolerance,
            abs_tolerance: n.solver_abs_tolerance,
            max_iterations: n.solver_max_iterations,
        }
    }

    /// `max(|u_left|, |u_right|, |initial|)`, or 1 if all vanish.
    pub fn data_scale(&self) -> f64 {
        let p = &self.config.physics;
        let s = p.u_left.abs().max(p.u_right.abs()).max(p.initial.abs());
        if s > 0.0 {
            s
        } else {
            1.0
        }
    }

    pub fn delta(&self) -> f64 {
        self.config.numerics.delta.unwrap_or(self.config.geometry.eta)
    }

    /// Scenario with the logistic drift strength and membrane off-diagonal
    /// entries of one sweep run.
    pub fn with_drift_run(&self, run: &DriftRun) -> Scenario {
        let mut config = self.config.clone();
        config.physics.drift = DriftConfig::Logistic { b: run.b };
        config.macro_model.off_diagonal = run.off_diagonal;
        Scenario { config, ..self.clone() }
    }

    pub fn cell_spec(&self, delta: f64) -> SimResult<CellProblemSpec> {
        let n = &self.config.numerics;
        let micro = self.config.microstructure.map(|m| m.spec());
        let mut spec =
            CellProblemSpec::uniform(n.cell_nx, n.cell_ny, self.tensor(), micro.as_ref(), delta).context("cell problem")?;
        spec.averaging = n.averaging.into();
        spec.source_scaling = n.source_scaling.into();
        spec.solver = self.solver();
        Ok(spec)
    }

    pub fn solve_cell(&self) -> SimResult<CellSolution> {
        solve_cell_functions(&self.cell_spec(self.delta())?).context("cell problem")
    }

    /// One cell solve per `delta`, in parallel; failures stay in their row.
    pub fn delta_sweep(&self, deltas: &[f64]) -> SimResult<Vec<SweepPoint>> {
        if deltas.is_empty() || deltas.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
            return Err(SimError::config("experiment.deltas", "needs positive values"));
        }
        let spec = self.cell_spec(self.delta())?;
        Ok(deltas
            .par_iter()
            .map(|&d| SweepPoint { parameter: d, delta: d, result: solve_cell_functions(&spec.with_delta(d)) })
            .collect())
    }

    /// Geometrically similar cells of height `eta`, solved with `delta = eta`.
    pub fn eta_sweep(&self, etas: &[f64]) -> SimResult<Vec<SweepPoint>> {
        if etas.is_empty() {
            return Err(SimError::config("experiment.etas", "needs at least one value"));
        }
        let spec = self.cell_spec(self.delta())?;
        Ok(etas
            .par_iter()
            .map(|&e| SweepPoint { parameter: e, delta: e, result: solve_cell_functions(&spec.with_delta(e)) })
            .collect())
    }

    fn check_rows_per_cell(&self, ny: usize, path: &str) -> SimResult<()> {
        let hy = self.geometry.height() / ny as f64;
        let rows = self.geometry.epsilon / hy;
        if self.config.microstructure.is_some() && rows < MIN_ROWS_PER_CELL as f64 - 1e-9 {
            return Err(SimError::config(
                path,
                format!("{ny} rows give {rows:.2} rows per cell of height {}; need {MIN_ROWS_PER_CELL}", self.geometry.epsilon),
            ));
        }
        Ok(())
    }

    /// Range every state obeying the maximum principle stays in, widened
    /// to contain `[0, 1]`.
    fn data_hull(&self) -> (f64, f64) {
        let p = &self.config.physics;
        let lo = [0.0, p.u_left, p.u_right, p.initial].into_iter().fold(f64::INFINITY, f64::min);
        let hi = [1.0, p.u_left, p.u_right, p.initial].into_iter().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    /// Time step and horizon for a strip run on `disc`.
    pub fn run_config(&self, disc: &Discretization, drift: &DriftPolynomial) -> RunConfig {
        let n = &self.config.numerics;
        let dt = n.dt.unwrap_or_else(|| {
            let (lo, hi) = self.data_hull();
            (n.cfl_safety * disc.cfl_limit(drift, lo, hi)).min(n.dt_max)
        });
        let mut run = RunConfig::new(dt, n.t_end.max(dt), n.steady_tol * self.data_scale());
        run.snapshot_fractions = n.snapshot_fractions.clone();
        run.solver = self.solver();
        run
    }

    pub fn micro_system(&self) -> SimResult<MicroSystem> {
        let n = &self.config.numerics;
        self.check_rows_per_cell(n.ny, "numerics.ny")?;
        let micro = self.config.microstructure.map(|m| m.spec());
        let problem = MicroProblem::from_physical(&self.geometry, &self.physical, micro, &self.physics(), self.config.physics.tensor_override.map(|t| t.tensor()))
            .context("micro problem")?;
        problem.discretize(n.nx, n.ny).context("micro problem")
    }

    pub fn run_micro(&self) -> SimResult<MicroRun> {
        let system = self.micro_system()?;
        let run = self.run_config(&system.disc, &system.drift);
        let result = system.run_to_steady_state(&run).context("micro run")?;
        Ok(MicroRun { system, run, result })
    }

    /// Membrane tensor: the override, or the cell tensor plus any
    /// configured off-diagonal entries.
    pub fn effective_tensor(&self, cell: &CellSolution) -> Tensor2 {
        let m = &self.config.macro_model;
        if let Some(t) = m.effective_override {
            return t.tensor();
        }
        let mut eff = cell.effective;
        if let Some([d12, d21]) = m.off_diagonal {
            eff.d12 = d12;
            eff.d21 = d21;
        }
        eff
    }

    pub fn macro_problem(&self, cell: &CellSolution) -> SimResult<MacroProblem> {
        let source = self.source();
        Ok(MacroProblem {
            geometry: self.geometry.clone(),
            bulk: self.tensor(),
            effective: self.effective_tensor(cell),
            drift: self.drift()?,
            source_bulk: source,
            source_membrane: cell.porosity * source,
            u_left: self.config.physics.u_left,
            u_right: self.config.physics.u_right,
            initial: self.config.physics.initial,
        })
    }

    pub fn run_macro_with(&self, cell: CellSolution) -> SimResult<MacroRun> {
        let n = &self.config.numerics;
        let problem = self.macro_problem(&cell)?;
        let system = assemble_macro(&problem, n.nx, n.ny).context("macro problem")?;
        let run = self.run_config(&system.disc, &system.drift);
        let result = system.run(&run).context("macro run")?;
        Ok(MacroRun { cell, problem, system, run, result })
    }

    pub fn run_macro(&self) -> SimResult<MacroRun> {
        self.run_macro_with(self.solve_cell()?)
    }

    /// Macro runs over the configured drift strengths, sharing one cell
    /// solve.
    pub fn drift_sweep(&self) -> SimResult<Vec<DriftSweepRow>> {
        let runs = &self.config.experiment.drift_runs;
        if runs.is_empty() {
            return Err(SimError::config("experiment.drift_runs", "needs at least one run"));
        }
        let cell = self.solve_cell()?;
        runs.par_iter()
            .map(|r| {
                let s = self.with_drift_run(r);
                let m = s.run_macro_with(cell.clone())?;
                Ok(DriftSweepRow {
                    drift: *r,
                    effective: m.problem.effective,
                    outflux: m.result.outflux(),
                    steady: m.result.transient.steady,
                    final_time: m.result.transient.final_time(),
                    max_mass_residual: m.result.transient.max_mass_residual(),
                })
            })
            .collect()
    }

    pub fn thin_problem(&self) -> SimResult<ThinMembraneProblem> {
        let t = &self.config.thin;
        let p = &self.config.physics;
        let bulk = self.tensor();
        let source = self.source();
        Ok(ThinMembraneProblem {
            height: self.geometry.height(),
            bulk_left: bulk,
            bulk_right: bulk,
            membrane: t.membrane_tensor.map_or(bulk, |m| m.tensor()),
            drift: self.drift()?,
            source_left: source,
            source_right: source,
            membrane_source: vec![t.membrane_source.unwrap_or(source); t.points],
            u_left: p.u_left,
            u_right: p.u_right,
            initial_left: p.initial,
            initial_right: p.initial,
            initial_membrane: p.initial,
        })
    }

    /// Thin-membrane numerics with the configured step, or `dt_max` when
    /// the step is chosen from the CFL limit.
    pub fn thin_numerics(&self) -> ThinNumerics {
        let t = &self.config.thin;
        let dt = t.dt.unwrap_or(t.dt_max);
        ThinNumerics {
            nx_bulk: t.nx_bulk,
            ny: t.ny,
            dt,
            t_end: t.t_end.max(dt),
            steady_tol: t.steady_tol * self.data_scale(),
            coupling_tol: t.coupling_tol,
            max_coupling_iterations: t.max_coupling_iterations,
            solver: self.solver(),
        }
    }

    pub fn thin_system(&self) -> SimResult<ThinSystem> {
        let mut system = ThinSystem::new(self.thin_problem()?, self.thin_numerics()).context("thin problem")?;
        let t = &self.config.thin;
        if t.dt.is_none() {
            let (lo, hi) = self.data_hull();
            let limit = system.cfl_limit(lo, hi).context("thin problem")?;
            let dt = (self.config.numerics.cfl_safety * limit).min(t.dt_max);
            system.numerics.dt = dt;
            system.numerics.t_end = t.t_end.max(dt);
        }
        Ok(system)
    }

    pub fn run_thin(&self) -> SimResult<ThinRun> {
        let system = self.thin_system()?;
        let numerics = system.numerics;
        let (nx, ny) = (numerics.nx_bulk, numerics.ny);
        let mut fractions = self.config.numerics.snapshot_fractions.clone();
        fractions.sort_by(f64::total_cmp);
        let mut next = 0;
        let mut snapshots = Vec::new();
        let result = system
            .run_observed(|rec, left, right, state| {
                while next < fractions.len() && rec.time >= fractions[next] * numerics.t_end * (1.0 - 1e-12) {
                    snapshots.push(ThinSnapshot { time: rec.time, bulk: combine(left, right, nx, ny), membrane: state.clone() });
                    next += 1;
                }
            })
            .context("thin run")?;
        let final_time = result.records.last().map_or(0.0, |r| r.time);
        if snapshots.last().map_or(true, |s| s.time != final_time) {
            snapshots.push(ThinSnapshot {
                time: final_time,
                bulk: result.combined(nx, ny),
                membrane: result.membrane.clone(),
            });
        }
        let single_domain_error = if self.config.thin.compare_single_domain {
            let reference = self.single_domain_reference(&system)?;
            let thin = result.combined(nx, ny);
            Some(thin.iter().zip(&reference).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs())))
        } else {
            None
        };
        Ok(ThinRun { system, result, snapshots, single_domain_error })
    }

    /// The strip without any membrane on the grid of the two bulks.
    fn single_domain_reference(&self, system: &ThinSystem) -> SimResult<Vec<f64>> {
        let n = system.numerics;
        let p = &system.problem;
        let problem = MicroProblem {
            geometry: self.geometry.clone(),
            microstructure: None,
            tensor: p.bulk_left,
            drift: p.drift.clone(),
            source: p.source_left,
            u_left: p.u_left,
            u_right: p.u_right,
            initial: p.initial_left,
        };
        let sys = problem.discretize(2 * n.nx_bulk, n.ny).context("single-domain reference")?;
        let mut run = RunConfig::new(n.dt, n.t_end, n.steady_tol);
        run.solver = n.solver;
        Ok(sys.run_to_steady_state(&run).context("single-domain reference")?.final_state)
    }

    /// Scenario at cell height `eps * ell / 2` on the convergence grid.
    pub fn at_epsilon(&self, eps: f64) -> SimResult<Scenario> {
        let mut config = self.config.clone();
        let e = &self.config.experiment;
        config.geometry.eta = eps * config.geometry.ell / 2.0;
        config.numerics.nx = e.converge_nx;
        config.numerics.ny = e.converge_ny;
        config.numerics.dt = Some(e.converge_dt);
        config.numerics.t_end = e.converge_t_end;
        Scenario::new(config)
    }

    /// Micro and macro solves per `epsilon` level and their discrepancy.
    pub fn converge(&self) -> SimResult<Vec<ConvergeRow>> {
        let levels = &self.config.experiment.eps_levels;
        if levels.len() < 3 {
            return Err(SimError::config("experiment.eps_levels", format!("needs at least 3 levels, got {}", levels.len())));
        }
        let scenarios = levels
            .iter()
            .enumerate()
            .map(|(i, &eps)| {
                let path = format!("experiment.eps_levels[{i}]");
                let s = self.at_epsilon(eps).map_err(|e| SimError::config(path.clone(), e.to_string()))?;
                s.check_rows_per_cell(s.config.numerics.ny, &path)?;
                let half = s.geometry.membrane_half_width();
                let hx = 2.0 / s.config.numerics.nx as f64;
                let k = (1.0 - half) / hx;
                if (k - k.round()).abs() > 1e-8 {
                    return Err(SimError::config(path, "membrane boundaries do not fall on grid faces"));
                }
                Ok(s)
            })
            .collect::<SimResult<Vec<_>>>()?;
        scenarios
            .par_iter()
            .map(|s| {
                let (micro, mac) = rayon::join(|| s.run_micro(), || s.run_macro());
                let (micro, mac) = (micro?, mac?);
                let d = discrepancy(
                    &s.geometry,
                    &micro.system.grid,
                    &micro.system.mask,
                    &micro.result.final_state,
                    &mac.result.transient.final_state,
                )
                .context("discrepancy")?;
                Ok(ConvergeRow {
                    epsilon: s.geometry.epsilon,
                    eta: s.config.geometry.eta,
                    cells: s.geometry.cells.len(),
                    effective: mac.problem.effective,
                    discrepancy: d,
                    micro_outflux: micro.result.outflux(),
                    macro_outflux: mac.result.outflux(),
                    micro_steady: micro.result.steady,
                    macro_steady: mac.result.transient.steady,
                })
            })
            .collect()
    }
}

fn combine(left: &[f64], right: &[f64], nx: usize, ny: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        out.extend_from_slice(&left[j * nx..(j + 1) * nx]);
        out.extend_from_slice(&right[j * nx..(j + 1) * nx]);
    }
    out
}

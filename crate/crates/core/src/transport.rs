//! IMEX time stepping of `du/dt = -A u + div(D G(u)) + F`.
//!
//! Each step solves `(I/dt + A) u_new = u/dt + load + div(D G(u)) + F`:
//! diffusion is implicit, drift and source are explicit.

use alloc::vec::Vec;

use crate::boundary::BoundaryCondition;
use crate::discretization::{Discretization, EdgeFluxes};
use crate::drift::DriftPolynomial;
use crate::error::{invalid, Error, Result};
use crate::linear_solver::{solve_general_from, solve_spd_from, SolverConfig};
use crate::math;
use crate::sparse::SparseOperator;

/// Diagnostics of a single step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub time: f64,
    pub mass: f64,
    /// Edge fluxes of the step: diffusive part at the new level, advective
    /// part at the old level.
    pub fluxes: EdgeFluxes,
    /// `|dM - dt (source - outflow)| / (dt hx hy sqrt(n_open))`.
    pub mass_residual: f64,
    /// Linear-solver residual target for the step; bounds `mass_residual`.
    pub residual_bound: f64,
    /// `max |u_new - u| / dt`.
    pub rate: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransientResult {
    pub records: Vec<StepRecord>,
    pub snapshots: Vec<Snapshot>,
    pub final_state: Vec<f64>,
    pub initial_mass: f64,
    pub steady: bool,
}

impl TransientResult {
    pub fn final_time(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.time)
    }

    pub fn final_fluxes(&self) -> EdgeFluxes {
        self.records.last().map_or_else(EdgeFluxes::default, |r| r.fluxes)
    }

    /// Mass leaving through the left edge per unit time.
    pub fn outflux(&self) -> f64 {
        -self.final_fluxes().left
    }

    pub fn max_mass_residual(&self) -> f64 {
        self.records.iter().fold(0.0, |m, r| m.max(r.mass_residual))
    }
}

/// Parameters of a run to steady state.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dt: f64,
    pub t_end: f64,
    /// Steady when `max |u_new - u| / dt <= steady_tol`.
    pub steady_tol: f64,
    /// Snapshot times as fractions of `t_end`.
    pub snapshot_fractions: Vec<f64>,
    pub solver: SolverConfig,
}

impl RunConfig {
    pub fn new(dt: f64, t_end: f64, steady_tol: f64) -> Self {
        RunConfig {
            dt,
            t_end,
            steady_tol,
            snapshot_fractions: alloc::vec![0.1, 0.5, 1.0],
            solver: SolverConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid("dt", "time step must be positive"));
        }
        if !(self.t_end >= self.dt) {
            return Err(invalid("t_end", "horizon must cover at least one step"));
        }
        if !(self.steady_tol > 0.0) {
            return Err(invalid("steady_tol", "tolerance must be positive"));
        }
        if self.snapshot_fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
            return Err(invalid("snapshot_fractions", "fractions must lie in (0, 1]"));
        }
        self.solver.validate()
    }
}

/// Result of one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub u: Vec<f64>,
    pub record: StepRecord,
}

/// Precomputed implicit operator for a fixed step size.
#[derive(Debug, Clone)]
pub struct ImexStepper<'a> {
    disc: &'a Discretization,
    drift: &'a DriftPolynomial,
    source: &'a [f64],
    dt: f64,
    shifted: SparseOperator,
    solver: SolverConfig,
    open_count: usize,
}

impl<'a> ImexStepper<'a> {
    pub fn new(
        disc: &'a Discretization,
        drift: &'a DriftPolynomial,
        source: &'a [f64],
        dt: f64,
        solver: SolverConfig,
    ) -> Result<Self> {
        let n = disc.grid().len();
        if source.len() != n {
            return Err(invalid("source", "length does not match the grid"));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(invalid("dt", "time step must be positive"));
        }
        let mask = disc.mask();
        let shift: Vec<f64> = (0..n).map(|k| if mask.is_open(k) { 1.0 / dt } else { 0.0 }).collect();
        Ok(ImexStepper {
            disc,
            drift,
            source,
            dt,
            shifted: disc.operator().add_diagonal(&shift),
            solver,
            open_count: mask.open_count(),
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn discretization(&self) -> &Discretization {
        self.disc
    }

    /// Value range of `u` on open cells joined with the boundary data.
    pub fn value_range(&self, u: &[f64]) -> (f64, f64) {
        let mask = self.disc.mask();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (k, v) in u.iter().enumerate() {
            if mask.is_open(k) {
                lo = lo.min(*v);
                hi = hi.max(*v);
            }
        }
        let b = self.disc.boundaries();
        for bc in [&b.left, &b.right, &b.bottom, &b.top] {
            match bc {
                BoundaryCondition::Dirichlet(v) => {
                    lo = lo.min(*v);
                    hi = hi.max(*v);
                }
                BoundaryCondition::Interface(c) => {
                    for v in &c.trace {
                        lo = lo.min(*v);
                        hi = hi.max(*v);
                    }
                }
                _ => {}
            }
        }
        (lo, hi)
    }

    pub fn cfl_limit(&self, u: &[f64]) -> f64 {
        let (lo, hi) = self.value_range(u);
        self.disc.cfl_limit(self.drift, lo, hi)
    }

    pub fn mass(&self, u: &[f64]) -> f64 {
        let mask = self.disc.mask();
        let s: f64 = u.iter().enumerate().filter(|(k, _)| mask.is_open(*k)).map(|(_, v)| v).sum();
        s * self.disc.grid().cell_area()
    }

    /// Right side `u/dt + load + div(D G(u)) + F` with obstacle rows zeroed.
    pub fn rhs(&self, u: &[f64]) -> Vec<f64> {
        let drift = self.disc.drift_divergence(self.drift, u);
        let mut b: Vec<f64> = (0..u.len()).map(|k| u[k] / self.dt + drift[k] + self.source[k]).collect();
        self.disc.apply_bc(&mut b);
        b
    }

    pub fn step(&self, u: &[f64], time: f64) -> Result<StepOutcome> {
        let limit = self.cfl_limit(u);
        if self.dt > limit * (1.0 + 1e-12) {
            return Err(Error::CflViolation { dt: self.dt, limit });
        }
        let b = self.rhs(u);
        let sol = if self.disc.is_symmetric() {
            solve_spd_from(&self.shifted, &b, u, &self.solver)?
        } else {
            solve_general_from(&self.shifted, &b, u, &self.solver)?
        };
        let u_new = sol.x;
        let mask = self.disc.mask();
        let fluxes = self.disc.edge_fluxes(self.drift, &u_new, u);
        let area = self.disc.grid().cell_area();
        let src: f64 = self
            .source
            .iter()
            .enumerate()
            .filter(|(k, _)| mask.is_open(*k))
            .map(|(_, v)| v)
            .sum::<f64>()
            * area;
        let m_old = self.mass(u);
        let m_new = self.mass(&u_new);
        let imbalance = (m_new - m_old) - self.dt * (src - fluxes.net_outflow());
        let scale = self.dt * area * math::sqrt(self.open_count.max(1) as f64);
        let rate = u_new
            .iter()
            .zip(u)
            .enumerate()
            .filter(|(k, _)| mask.is_open(*k))
            .fold(0.0_f64, |m, (_, (a, b))| m.max((a - b).abs()))
            / self.dt;
        let target = self.solver.rel_tolerance * math::norm2(&b) + self.solver.abs_tolerance;
        Ok(StepOutcome {
            u: u_new,
            record: StepRecord {
                time: time + self.dt,
                mass: m_new,
                fluxes,
                mass_residual: imbalance.abs() / scale,
                residual_bound: target,
                rate,
                iterations: sol.iterations,
            },
        })
    }
}

/// Steps from `u0` until the time derivative falls below the tolerance or
/// the horizon is exhausted (then `steady` is false and the partial result
/// is returned).
pub fn run_to_steady_state(
    disc: &Discretization,
    drift: &DriftPolynomial,
    source: &[f64],
    u0: &[f64],
    cfg: &RunConfig,
) -> Result<TransientResult> {
    run_observed(disc, drift, source, u0, cfg, |_, _, _| {})
}

/// As [`run_to_steady_state`], calling `observe(u_old, u_new, record)`
/// after every step.
pub fn run_observed(
    disc: &Discretization,
    drift: &DriftPolynomial,
    source: &[f64],
    u0: &[f64],
    cfg: &RunConfig,
    mut observe: impl FnMut(&[f64], &[f64], &StepRecord),
) -> Result<TransientResult> {
    cfg.validate()?;
    let n = disc.grid().len();
    if u0.len() != n {
        return Err(invalid("initial data", "length does not match the grid"));
    }
    let stepper = ImexStepper::new(disc, drift, source, cfg.dt, cfg.solver)?;
    let mut u: Vec<f64> = u0.to_vec();
    for (k, v) in u.iter_mut().enumerate() {
        if disc.mask().is_blocked(k) {
            *v = 0.0;
        }
    }
    let initial_mass = stepper.mass(&u);
    let steps = math::ceil(cfg.t_end / cfg.dt - 1e-9) as usize;
    let mut fractions = cfg.snapshot_fractions.clone();
    fractions.sort_by(f64::total_cmp);
    let mut next_snap = 0;
    let mut records = Vec::with_capacity(steps.min(1 << 16));
    let mut snapshots = Vec::new();
    let mut time = 0.0;
    let mut steady = false;
    for s in 0..steps {
        let out = stepper.step(&u, time)?;
        time = (s + 1) as f64 * cfg.dt;
        let record = StepRecord { time, ..out.record };
        observe(&u, &out.u, &record);
        u = out.u;
        records.push(record);
        while next_snap < fractions.len() && time >= fractions[next_snap] * cfg.t_end * (1.0 - 1e-12) {
            snapshots.push(Snapshot { time, values: u.clone() });
            next_snap += 1;
        }
        if out.record.rate <= cfg.steady_tol {
            steady = true;
            break;
        }
    }
    if snapshots.last().map_or(true, |s| s.time != time) {
        snapshots.push(Snapshot { time, values: u.clone() });
    }
    Ok(TransientResult { records, snapshots, final_state: u, initial_mass, steady })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::Boundaries;
    use crate::discretization::assemble_diffusion;
    use crate::grid::{CellMask, StructuredGrid, Tensor2, TensorField};

    #[test]
    fn equilibrium_is_stationary() {
        let g = StructuredGrid::covering((-1.0, 1.0), (0.0, 0.5), 8, 4).unwrap();
        let d = assemble_diffusion(
            &g,
            &TensorField::uniform(&g, Tensor2::diagonal(1.0, 0.1)),
            &CellMask::empty(&g),
            &Boundaries::strip(0.3, 0.3),
        )
        .unwrap();
        let drift = DriftPolynomial::zero();
        let src = alloc::vec![0.0; g.len()];
        let st = ImexStepper::new(&d, &drift, &src, 0.1, SolverConfig::default()).unwrap();
        let u = alloc::vec![0.3; g.len()];
        let out = st.step(&u, 0.0).unwrap();
        for v in &out.u {
            assert!((v - 0.3).abs() < 1e-13);
        }
    }

    #[test]
    fn cfl_violation_is_rejected() {
        let g = StructuredGrid::covering((0.0, 1.0), (0.0, 1.0), 10, 2).unwrap();
        let d = assemble_diffusion(
            &g,
            &TensorField::uniform(&g, Tensor2::IDENTITY),
            &CellMask::empty(&g),
            &Boundaries::strip(0.0, 1.0),
        )
        .unwrap();
        let drift = DriftPolynomial::dimensionless(alloc::vec![-1.0, 1.0]).unwrap();
        let src = alloc::vec![0.0; g.len()];
        let st = ImexStepper::new(&d, &drift, &src, 1.0, SolverConfig::default()).unwrap();
        let u = alloc::vec![0.5; g.len()];
        assert!(matches!(st.step(&u, 0.0), Err(Error::CflViolation { .. })));
    }
}

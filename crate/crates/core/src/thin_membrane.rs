//! Infinitely thin membrane at `X1 = 0` between the bulk domains
//! `[-1, 0] x [0, H]` and `[0, 1] x [0, H]`.
//!
//! Every bulk row `z2` owns a periodic profile `u(y2)`, `y2 in [0, 1)`,
//! that evolves by
//! `du/dT - d/dy2 (D22 du/dy2 + D21 g(u)) = F(y2)`.
//!
//! Coupling per time step:
//!
//! * Both bulks see the profile mean as a Dirichlet trace for diffusion,
//!   so the concentration is continuous across the membrane.
//! * The advective flux `q = D11 <g(u)> + D12 <du/dy2>` crosses the
//!   membrane unchanged. It leaves the left bulk as `-q` and enters the
//!   right one as `q`.
//! * The diffusive bulk fluxes into the membrane feed the profile mean
//!   through the jump balance
//!   `W (m - m_old) / dt = W <F> + k_l (T_l - m) + k_r (T_r - m)`,
//!   with `W = 2` the membrane width in `z1` units, `T` the bulk cell
//!   values next to the membrane and `k = 2 D11 / h` the ghost
//!   conductances.
//!
//! The mean and the bulk traces are found by a fixed-point iteration. It
//! contracts in the max norm with factor at most
//! `(k_l + k_r) / (W / dt + k_l + k_r)`.

use alloc::vec::Vec;

use crate::boundary::{BoundaryCondition, Boundaries, InterfaceCoupling};
use crate::discretization::{assemble_diffusion, Discretization};
use crate::drift::DriftPolynomial;
use crate::error::{invalid, Error, Result};
use crate::grid::{CellMask, StructuredGrid, Tensor2, TensorField};
use crate::linear_solver::SolverConfig;
use crate::transport::ImexStepper;

/// Width of the membrane layer in the stretched variable `z1`.
pub const MEMBRANE_WIDTH: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ThinMembraneProblem {
    /// Strip height `2h/l`.
    pub height: f64,
    pub bulk_left: Tensor2,
    pub bulk_right: Tensor2,
    pub membrane: Tensor2,
    pub drift: DriftPolynomial,
    pub source_left: f64,
    pub source_right: f64,
    /// Membrane source sampled at the profile nodes `y2 = (k + 1/2) / m`.
    pub membrane_source: Vec<f64>,
    pub u_left: f64,
    pub u_right: f64,
    pub initial_left: f64,
    pub initial_right: f64,
    pub initial_membrane: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThinNumerics {
    /// Cells across each bulk domain.
    pub nx_bulk: usize,
    /// Rows along the membrane.
    pub ny: usize,
    pub dt: f64,
    pub t_end: f64,
    pub steady_tol: f64,
    /// Tolerance on the trace update of the fixed-point loop, relative to
    /// the largest data or state magnitude. Never tighter than ten times the
    /// linear-solver tolerance.
    pub coupling_tol: f64,
    pub max_coupling_iterations: usize,
    pub solver: SolverConfig,
}

/// Periodic membrane profiles, one per bulk row; `values[j * m + k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MembraneState {
    pub rows: usize,
    pub points: usize,
    pub values: Vec<f64>,
}

impl MembraneState {
    pub fn constant(rows: usize, points: usize, value: f64) -> Self {
        MembraneState { rows, points, values: alloc::vec![value; rows * points] }
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.values[j * self.points..(j + 1) * self.points]
    }

    pub fn row_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.values[j * self.points..(j + 1) * self.points]
    }

    pub fn means(&self) -> Vec<f64> {
        (0..self.rows).map(|j| self.row(j).iter().sum::<f64>() / self.points as f64).collect()
    }
}

/// Which side of the membrane a flux is evaluated for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Two independent evaluations of the integrated jump condition.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct JumpBalance {
    /// Diffusive bulk flux into the membrane, integrated along it.
    pub bulk: f64,
    /// `W * int <du/dT - d/dy2(D21 g(u)) - F> dz2` from the profiles.
    pub membrane: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThinStepRecord {
    pub time: f64,
    pub coupling_history: Vec<f64>,
    pub rate: f64,
    /// Flux `J . e_x` through the outer left and right edges.
    pub flux_left: f64,
    pub flux_right: f64,
    pub jump: JumpBalance,
    /// Largest two-cell estimate `|T_r - T_l| / 2` of the `z1` derivative;
    /// reported only.
    pub dz1_estimate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThinResult {
    pub left: Vec<f64>,
    pub right: Vec<f64>,
    pub membrane: MembraneState,
    pub records: Vec<ThinStepRecord>,
    pub steady: bool,
}

impl ThinResult {
    pub fn outflux(&self) -> f64 {
        self.records.last().map_or(0.0, |r| -r.flux_left)
    }

    /// Bulk fields side by side on the `2 nx x ny` grid over `[-1, 1]`.
    pub fn combined(&self, nx_bulk: usize, ny: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * nx_bulk * ny);
        for j in 0..ny {
            out.extend_from_slice(&self.left[j * nx_bulk..(j + 1) * nx_bulk]);
            out.extend_from_slice(&self.right[j * nx_bulk..(j + 1) * nx_bulk]);
        }
        out
    }
}

/// The problem discretized once; bulk operators are rebuilt per coupling
/// iteration because the interface data enter the load.
#[derive(Debug, Clone)]
pub struct ThinSystem {
    pub problem: ThinMembraneProblem,
    pub numerics: ThinNumerics,
    pub grid_left: StructuredGrid,
    pub grid_right: StructuredGrid,
    tensor_left: TensorField,
    tensor_right: TensorField,
    profile: Discretization,
    k_left: f64,
    k_right: f64,
}

impl ThinSystem {
    pub fn new(problem: ThinMembraneProblem, numerics: ThinNumerics) -> Result<Self> {
        let m = problem.membrane_source.len();
        if m < 3 {
            return Err(invalid("membrane_source", "need at least three profile points"));
        }
        if !(problem.height > 0.0) {
            return Err(invalid("height", "must be positive"));
        }
        if numerics.max_coupling_iterations == 0 || !(numerics.coupling_tol > 0.0) {
            return Err(invalid("coupling", "tolerance and iteration cap must be positive"));
        }
        let (nx, ny) = (numerics.nx_bulk, numerics.ny);
        let grid_left = StructuredGrid::covering((-1.0, 0.0), (0.0, problem.height), nx, ny)?;
        let grid_right = StructuredGrid::covering((0.0, 1.0), (0.0, problem.height), nx, ny)?;
        for (t, name) in [(&problem.bulk_left, "bulk_left"), (&problem.bulk_right, "bulk_right"), (&problem.membrane, "membrane")] {
            t.check_admissible().map_err(|reason| invalid(name, reason))?;
        }
        let pgrid = StructuredGrid::covering((0.0, 1.0), (0.0, 1.0), 1, m)?;
        let profile = assemble_diffusion(
            &pgrid,
            &TensorField::uniform(&pgrid, problem.membrane),
            &CellMask::empty(&pgrid),
            &Boundaries {
                left: BoundaryCondition::ZeroFlux,
                right: BoundaryCondition::ZeroFlux,
                bottom: BoundaryCondition::Periodic,
                top: BoundaryCondition::Periodic,
            },
        )?;
        Ok(ThinSystem {
            k_left: 2.0 * problem.bulk_left.d11 / grid_left.hx,
            k_right: 2.0 * problem.bulk_right.d11 / grid_right.hx,
            tensor_left: TensorField::uniform(&grid_left, problem.bulk_left),
            tensor_right: TensorField::uniform(&grid_right, problem.bulk_right),
            grid_left,
            grid_right,
            profile,
            problem,
            numerics,
        })
    }

    pub fn points(&self) -> usize {
        self.problem.membrane_source.len()
    }

    /// Largest step the explicit drift tolerates in the bulks and the
    /// profiles for states within `[lo, hi]`.
    pub fn cfl_limit(&self, lo: f64, hi: f64) -> Result<f64> {
        let drift = &self.problem.drift;
        let closed = Boundaries::all(BoundaryCondition::ZeroFlux);
        let mut limit = self.profile.cfl_limit(drift, lo, hi);
        for (grid, tensor) in [(&self.grid_left, &self.tensor_left), (&self.grid_right, &self.tensor_right)] {
            let disc = assemble_diffusion(grid, tensor, &CellMask::empty(grid), &closed)?;
            limit = limit.min(disc.cfl_limit(drift, lo, hi));
        }
        Ok(limit)
    }

    pub fn initial_state(&self) -> (Vec<f64>, Vec<f64>, MembraneState) {
        let p = &self.problem;
        (
            alloc::vec![p.initial_left; self.grid_left.len()],
            alloc::vec![p.initial_right; self.grid_right.len()],
            MembraneState::constant(self.numerics.ny, self.points(), p.initial_membrane),
        )
    }

    /// Per-row flux `D11 <g(u)> + D12 <du/dy2>` seen from `side`; the right
    /// side carries the opposite sign. The `z1` derivative is dropped.
    pub fn membrane_flux(&self, state: &MembraneState, side: Side) -> Vec<f64> {
        let d = &self.problem.membrane;
        let m = state.points;
        let h = 1.0 / m as f64;
        (0..state.rows)
            .map(|j| {
                let u = state.row(j);
                let mut g = 0.0;
                let mut du = 0.0;
                for k in 0..m {
                    g += self.problem.drift.eval(u[k]);
                    du += (u[(k + 1) % m] - u[(k + m - 1) % m]) / (2.0 * h);
                }
                let q = d.d11 * g / m as f64 + d.d12 * du / m as f64;
                match side {
                    Side::Left => q,
                    Side::Right => -q,
                }
            })
            .collect()
    }

    /// Advances the profiles by one step given the bulk cell values next to
    /// the membrane.
    pub fn membrane_step(
        &self,
        state: &MembraneState,
        traces_left: &[f64],
        traces_right: &[f64],
        dt: f64,
    ) -> Result<MembraneState> {
        if traces_left.len() != state.rows || traces_right.len() != state.rows {
            return Err(invalid("traces", "one value per membrane row is required"));
        }
        let stepper = ImexStepper::new(&self.profile, &self.problem.drift, &self.problem.membrane_source, dt, self.numerics.solver)?;
        let w = MEMBRANE_WIDTH;
        let m = state.points as f64;
        let f_mean = self.problem.membrane_source.iter().sum::<f64>() / m;
        let mut next = state.clone();
        for j in 0..state.rows {
            let old = state.row(j);
            let old_mean = old.iter().sum::<f64>() / m;
            let out = stepper.step(old, 0.0)?;
            let fluct_mean = out.u.iter().sum::<f64>() / m;
            let mean = (w * old_mean / dt + w * f_mean + self.k_left * traces_left[j] + self.k_right * traces_right[j])
                / (w / dt + self.k_left + self.k_right);
            for (dst, v) in next.row_mut(j).iter_mut().zip(&out.u) {
                *dst = v - fluct_mean + mean;
            }
        }
        Ok(next)
    }

    fn bulk_disc(&self, side: Side, trace: &[f64], adv: &[f64]) -> Result<Discretization> {
        let coupling = BoundaryCondition::Interface(InterfaceCoupling::new(trace.to_vec(), adv.to_vec()));
        let p = &self.problem;
        let (grid, tensor, bcs) = match side {
            Side::Left => (
                &self.grid_left,
                &self.tensor_left,
                Boundaries {
                    left: BoundaryCondition::Dirichlet(p.u_left),
                    right: coupling,
                    bottom: BoundaryCondition::ZeroFlux,
                    top: BoundaryCondition::ZeroFlux,
                },
            ),
            Side::Right => (
                &self.grid_right,
                &self.tensor_right,
                Boundaries {
                    left: coupling,
                    right: BoundaryCondition::Dirichlet(p.u_right),
                    bottom: BoundaryCondition::ZeroFlux,
                    top: BoundaryCondition::ZeroFlux,
                },
            ),
        };
        assemble_diffusion(grid, tensor, &CellMask::empty(grid), &bcs)
    }

    /// One coupled step. Returns the new bulk fields, profiles and record.
    pub fn step(
        &self,
        left: &[f64],
        right: &[f64],
        state: &MembraneState,
        time: f64,
    ) -> Result<(Vec<f64>, Vec<f64>, MembraneState, ThinStepRecord)> {
        let dt = self.numerics.dt;
        let nx = self.numerics.nx_bulk;
        let ny = self.numerics.ny;
        let p = &self.problem;
        let q = self.membrane_flux(state, Side::Left);
        let adv_left: Vec<f64> = q.iter().map(|v| -v).collect();
        let adv_right: Vec<f64> = q.clone();
        let src_left = alloc::vec![p.source_left; self.grid_left.len()];
        let src_right = alloc::vec![p.source_right; self.grid_right.len()];
        let scale = [p.u_left, p.u_right, p.initial_left, p.initial_right, p.initial_membrane]
            .iter()
            .chain(&state.values)
            .fold(0.0_f64, |a, v| a.max(v.abs()))
            .max(1e-300);
        // the trace update cannot be resolved below the accuracy of the bulk solves
        let floor = 10.0 * self.numerics.solver.rel_tolerance;
        let tol = self.numerics.coupling_tol.max(floor) * scale;
        let mut trace = state.means();
        let mut history = Vec::new();
        let (ul, ur, next, disc_l, disc_r) = loop {
            let disc_l = self.bulk_disc(Side::Left, &trace, &adv_left)?;
            let disc_r = self.bulk_disc(Side::Right, &trace, &adv_right)?;
            let ul = ImexStepper::new(&disc_l, &p.drift, &src_left, dt, self.numerics.solver)?.step(left, time)?.u;
            let ur = ImexStepper::new(&disc_r, &p.drift, &src_right, dt, self.numerics.solver)?.step(right, time)?.u;
            let tl: Vec<f64> = (0..ny).map(|j| ul[j * nx + nx - 1]).collect();
            let tr: Vec<f64> = (0..ny).map(|j| ur[j * nx]).collect();
            let next = self.membrane_step(state, &tl, &tr, dt)?;
            let new_trace = next.means();
            let res = new_trace.iter().zip(&trace).fold(0.0_f64, |a, (x, y)| a.max((x - y).abs()));
            history.push(res);
            trace = new_trace;
            if res <= tol {
                break (ul, ur, next, disc_l, disc_r);
            }
            if history.len() >= self.numerics.max_coupling_iterations {
                return Err(Error::CouplingNotConverged { iterations: history.len(), history });
            }
        };
        // Bulks at the converged trace; the last solve used the previous
        // iterate, which differs by at most the tolerance.
        let tl: Vec<f64> = (0..ny).map(|j| ul[j * nx + nx - 1]).collect();
        let tr: Vec<f64> = (0..ny).map(|j| ur[j * nx]).collect();
        let hy = self.grid_left.hy;
        let mut bulk = 0.0;
        let mut dz1 = 0.0_f64;
        for j in 0..ny {
            // diffusive flux leaving each bulk through the membrane face
            bulk += disc_l.diffusive_x_flux(nx, j, &ul) - disc_r.diffusive_x_flux(0, j, &ur);
            dz1 = dz1.max(0.5 * (tr[j] - tl[j]).abs());
        }
        let m = state.points as f64;
        let drift_div = |u: &[f64]| self.profile.drift_divergence(&p.drift, u);
        let mut membrane = 0.0;
        for j in 0..ny {
            let dd = drift_div(state.row(j));
            let s: f64 = (0..state.points)
                .map(|k| (next.row(j)[k] - state.row(j)[k]) / dt - dd[k] - p.membrane_source[k])
                .sum();
            membrane += MEMBRANE_WIDTH * s / m;
        }
        let rate = ul
            .iter()
            .zip(left)
            .chain(ur.iter().zip(right))
            .chain(next.values.iter().zip(&state.values))
            .fold(0.0_f64, |a, (x, y)| a.max((x - y).abs()))
            / dt;
        let record = ThinStepRecord {
            time: time + dt,
            coupling_history: history,
            rate,
            flux_left: disc_l.x_line_flux(0, &p.drift, &ul, left),
            flux_right: disc_r.x_line_flux(nx, &p.drift, &ur, right),
            jump: JumpBalance { bulk: bulk * hy, membrane: membrane * hy },
            dz1_estimate: dz1,
        };
        Ok((ul, ur, next, record))
    }

    /// Steps until the combined time derivative falls below `steady_tol`
    /// or the horizon is reached.
    pub fn run(&self) -> Result<ThinResult> {
        self.run_observed(|_, _, _, _| {})
    }

    /// As [`ThinSystem::run`], calling `observe(record, left, right, state)`
    /// after every step.
    pub fn run_observed(
        &self,
        mut observe: impl FnMut(&ThinStepRecord, &[f64], &[f64], &MembraneState),
    ) -> Result<ThinResult> {
        let n = &self.numerics;
        if !(n.dt > 0.0 && n.t_end >= n.dt && n.steady_tol > 0.0) {
            return Err(invalid("numerics", "dt, t_end and steady_tol must be positive with t_end >= dt"));
        }
        let (mut left, mut right, mut state) = self.initial_state();
        let steps = crate::math::ceil(n.t_end / n.dt - 1e-9) as usize;
        let mut records = Vec::new();
        let mut steady = false;
        for s in 0..steps {
            let (l, r, m, rec) = self.step(&left, &right, &state, s as f64 * n.dt)?;
            left = l;
            right = r;
            state = m;
            observe(&rec, &left, &right, &state);
            let done = rec.rate <= n.steady_tol;
            records.push(rec);
            if done {
                steady = true;
                break;
            }
        }
        Ok(ThinResult { left, right, membrane: state, records, steady })
    }
}

/// Builds and runs the coupled problem.
pub fn run_thin(problem: &ThinMembraneProblem, numerics: &ThinNumerics) -> Result<ThinResult> {
    ThinSystem::new(problem.clone(), *numerics)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn numerics() -> ThinNumerics {
        ThinNumerics {
            nx_bulk: 8,
            ny: 4,
            dt: 0.05,
            t_end: 1.0,
            steady_tol: 1e-10,
            coupling_tol: 1e-12,
            max_coupling_iterations: 500,
            solver: SolverConfig { rel_tolerance: 1e-13, ..SolverConfig::default() },
        }
    }

    fn problem(m: usize) -> ThinMembraneProblem {
        ThinMembraneProblem {
            height: 0.5,
            bulk_left: Tensor2::IDENTITY,
            bulk_right: Tensor2::IDENTITY,
            membrane: Tensor2::IDENTITY,
            drift: DriftPolynomial::zero(),
            source_left: 0.0,
            source_right: 0.0,
            membrane_source: alloc::vec![0.0; m],
            u_left: 0.0,
            u_right: 0.0,
            initial_left: 0.0,
            initial_right: 0.0,
            initial_membrane: 0.0,
        }
    }

    #[test]
    fn constant_profile_with_matching_traces_is_stationary() {
        let sys = ThinSystem::new(problem(16), numerics()).unwrap();
        let st = MembraneState::constant(4, 16, 0.7);
        let next = sys.membrane_step(&st, &[0.7; 4], &[0.7; 4], 0.1).unwrap();
        assert!(next.values.iter().all(|v| (v - 0.7).abs() < 1e-14));
    }

    #[test]
    fn logistic_flux_of_a_constant_profile() {
        let mut p = problem(8);
        p.drift = DriftPolynomial::logistic(2.0, 1.0, 10.0).unwrap();
        let sys = ThinSystem::new(p, numerics()).unwrap();
        let c = 0.3;
        let st = MembraneState::constant(4, 8, c);
        let expect = -2.0 * c * (1.0 - c) / 20.0;
        for (l, r) in sys.membrane_flux(&st, Side::Left).iter().zip(sys.membrane_flux(&st, Side::Right)) {
            assert!((l - expect).abs() < 1e-15);
            assert!((r + expect).abs() < 1e-15);
        }
    }

    #[test]
    fn coupling_contracts_monotonically() {
        let mut p = problem(8);
        p.u_right = 1.0;
        let sys = ThinSystem::new(p, numerics()).unwrap();
        let (l, r, m) = sys.initial_state();
        let (_, _, _, rec) = sys.step(&l, &r, &m, 0.0).unwrap();
        assert!(rec.coupling_history.len() > 1);
        assert!(rec.coupling_history.windows(2).all(|w| w[1] < w[0]));
    }
}

//! Reference solver on the strip with the obstacles resolved explicitly.

use alloc::vec::Vec;

use crate::boundary::Boundaries;
use crate::discretization::{assemble_diffusion, Discretization};
use crate::drift::DriftPolynomial;
use crate::error::{invalid, Result};
use crate::geometry::{rasterize_obstacles, DimensionlessGeometry, MicrostructureSpec, PhysicalGeometry};
use crate::grid::{CellMask, StructuredGrid, Tensor2, TensorField};
use crate::transport::{run_to_steady_state, ImexStepper, RunConfig, StepOutcome, TransientResult};

/// Physical coefficients and data (cm, s, g/cm^3).
#[derive(Debug, Clone, PartialEq)]
pub struct Physics {
    pub d1: f64,
    pub d2: f64,
    /// Time scale; `None` selects `l^2 / (4 d1)`, which makes `D1 = 1`.
    pub tau: Option<f64>,
    /// Coefficients `a_1..a_k` of the drift polynomial `p`.
    pub drift: Vec<f64>,
    pub u_left: f64,
    pub u_right: f64,
    /// Constant source `f` in physical units.
    pub source: f64,
    /// Constant initial concentration.
    pub initial: f64,
}

impl Physics {
    /// Logistic drift `p(U) = -b U (1 - U)` with the remaining data zero.
    pub fn logistic(d1: f64, d2: f64, b: f64, u_left: f64, u_right: f64) -> Self {
        Physics { d1, d2, tau: None, drift: alloc::vec![-b, b], u_left, u_right, source: 0.0, initial: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d1 > 0.0 && self.d2 > 0.0 && self.d1.is_finite() && self.d2.is_finite()) {
            return Err(invalid("physics", "diffusivities must be positive"));
        }
        if let Some(t) = self.tau {
            if !(t > 0.0 && t.is_finite()) {
                return Err(invalid("physics.tau", "time scale must be positive"));
            }
        }
        for v in [self.u_left, self.u_right, self.source, self.initial] {
            if !v.is_finite() {
                return Err(invalid("physics", "data must be finite"));
            }
        }
        Ok(())
    }

    pub fn tau(&self, ell: f64) -> f64 {
        self.tau.unwrap_or(ell * ell / (4.0 * self.d1))
    }

    /// `diag(4 tau d1 / l^2, 4 tau d2 / l^2)`.
    pub fn tensor(&self, ell: f64) -> Tensor2 {
        let s = 4.0 * self.tau(ell) / (ell * ell);
        Tensor2::diagonal(s * self.d1, s * self.d2)
    }

    pub fn drift_polynomial(&self, ell: f64) -> Result<DriftPolynomial> {
        if self.drift.is_empty() {
            return Ok(DriftPolynomial::zero());
        }
        DriftPolynomial::from_physical(&self.drift, ell, self.d1)
    }

    /// Dimensionless source `tau f`.
    pub fn dimensionless_source(&self, ell: f64) -> f64 {
        self.tau(ell) * self.source
    }
}

/// Dimensionless micro problem.
#[derive(Debug, Clone, PartialEq)]
pub struct MicroProblem {
    pub geometry: DimensionlessGeometry,
    pub microstructure: Option<MicrostructureSpec>,
    pub tensor: Tensor2,
    pub drift: DriftPolynomial,
    pub source: f64,
    pub u_left: f64,
    pub u_right: f64,
    pub initial: f64,
}

impl MicroProblem {
    /// Converts physical inputs; `full_tensor` replaces the diagonal tensor
    /// built from `d1, d2, tau`.
    pub fn from_physical(
        geometry: &DimensionlessGeometry,
        phys_geom: &PhysicalGeometry,
        microstructure: Option<MicrostructureSpec>,
        physics: &Physics,
        full_tensor: Option<Tensor2>,
    ) -> Result<Self> {
        physics.validate()?;
        let ell = phys_geom.ell;
        Ok(MicroProblem {
            geometry: geometry.clone(),
            microstructure,
            tensor: full_tensor.unwrap_or_else(|| physics.tensor(ell)),
            drift: physics.drift_polynomial(ell)?,
            source: physics.dimensionless_source(ell),
            u_left: physics.u_left,
            u_right: physics.u_right,
            initial: physics.initial,
        })
    }

    /// Rasterizes and assembles on an `nx x ny` grid over the strip.
    pub fn discretize(&self, nx: usize, ny: usize) -> Result<MicroSystem> {
        let d = &self.geometry.domain;
        let grid = StructuredGrid::covering((d.x0, d.x1), (d.y0, d.y1), nx, ny)?;
        let mask = rasterize_obstacles(&self.geometry, self.microstructure.as_ref(), &grid)?;
        let tensor = TensorField::uniform(&grid, self.tensor).masked(&mask);
        let bcs = Boundaries::strip(self.u_left, self.u_right);
        let disc = assemble_diffusion(&grid, &tensor, &mask, &bcs)?;
        let source = (0..grid.len()).map(|k| if mask.is_open(k) { self.source } else { 0.0 }).collect();
        let initial = (0..grid.len()).map(|k| if mask.is_open(k) { self.initial } else { 0.0 }).collect();
        Ok(MicroSystem { grid, mask, disc, drift: self.drift.clone(), source, initial })
    }
}

/// A discretized micro problem.
#[derive(Debug, Clone)]
pub struct MicroSystem {
    pub grid: StructuredGrid,
    pub mask: CellMask,
    pub disc: Discretization,
    pub drift: DriftPolynomial,
    pub source: Vec<f64>,
    pub initial: Vec<f64>,
}

impl MicroSystem {
    /// One IMEX step from `u` at `time`.
    pub fn step(&self, u: &[f64], dt: f64, time: f64, cfg: &RunConfig) -> Result<StepOutcome> {
        ImexStepper::new(&self.disc, &self.drift, &self.source, dt, cfg.solver)?.step(u, time)
    }

    pub fn run_to_steady_state(&self, cfg: &RunConfig) -> Result<TransientResult> {
        run_to_steady_state(&self.disc, &self.drift, &self.source, &self.initial, cfg)
    }

    pub fn run_from(&self, u0: &[f64], cfg: &RunConfig) -> Result<TransientResult> {
        run_to_steady_state(&self.disc, &self.drift, &self.source, u0, cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::nondimensionalize;

    #[test]
    fn default_time_scale_normalizes_d1() {
        let p = Physics::logistic(10.0, 1.0, 2.0, 0.0, 5.8e-5);
        let t = p.tensor(1.0);
        assert!((t.d11 - 1.0).abs() < 1e-15);
        assert!((t.d22 - 0.1).abs() < 1e-15);
        let g = p.drift_polynomial(1.0).unwrap();
        assert!((g.coefficients()[0] + 0.1).abs() < 1e-16);
    }

    #[test]
    fn obstacles_are_masked_out_of_the_initial_data() {
        let pg = PhysicalGeometry { ell: 1.0, h: 0.4, w: 0.25, eta: 0.08 };
        let g = nondimensionalize(&pg).unwrap();
        let mut phys = Physics::logistic(10.0, 1.0, 2.0, 0.0, 1.0);
        phys.initial = 0.5;
        let micro = MicrostructureSpec::Rectangle { width_fraction: 0.5, height_fraction: 0.5 };
        let p = MicroProblem::from_physical(&g, &pg, Some(micro), &phys, None).unwrap();
        let s = p.discretize(64, 40).unwrap();
        assert!(s.mask.blocked_count() > 0);
        for k in 0..s.grid.len() {
            assert_eq!(s.initial[k] == 0.0, s.mask.is_blocked(k));
        }
    }
}

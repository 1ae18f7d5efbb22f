//! Finite-thickness homogenized strip: the bulk tensor outside the membrane
//! and the effective tensor inside, on one grid whose faces align with the
//! membrane boundaries. Flux continuity across the membrane boundaries is
//! automatic because each face carries a single flux.

use alloc::vec::Vec;

use crate::boundary::Boundaries;
use crate::discretization::{assemble_diffusion, Discretization};
use crate::drift::DriftPolynomial;
use crate::error::{Error, Result};
use crate::geometry::DimensionlessGeometry;
use crate::grid::{CellMask, StructuredGrid, Tensor2, TensorField};
use crate::transport::{run_observed, RunConfig, TransientResult};

#[derive(Debug, Clone, PartialEq)]
pub struct MacroProblem {
    pub geometry: DimensionlessGeometry,
    pub bulk: Tensor2,
    /// Effective tensor in the membrane (diagonal from a cell problem, or a
    /// full matrix).
    pub effective: Tensor2,
    pub drift: DriftPolynomial,
    pub source_bulk: f64,
    /// Cell-averaged membrane source.
    pub source_membrane: f64,
    pub u_left: f64,
    pub u_right: f64,
    pub initial: f64,
}

/// Discretized macro problem.
#[derive(Debug, Clone)]
pub struct MacroSystem {
    pub grid: StructuredGrid,
    pub disc: Discretization,
    pub drift: DriftPolynomial,
    pub source: Vec<f64>,
    pub initial: Vec<f64>,
    /// x-face indices of the left and right membrane boundaries.
    pub interface_faces: (usize, usize),
}

/// Integrated flux `J . e_x` through the two membrane boundaries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterfaceRecord {
    pub time: f64,
    pub left: f64,
    pub right: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MacroResult {
    pub transient: TransientResult,
    pub interface: Vec<InterfaceRecord>,
}

impl MacroResult {
    pub fn outflux(&self) -> f64 {
        self.transient.outflux()
    }
}

/// Assembles the piecewise-tensor problem on an `nx x ny` grid over the
/// strip. Both membrane boundaries must fall on grid faces.
pub fn assemble_macro(problem: &MacroProblem, nx: usize, ny: usize) -> Result<MacroSystem> {
    problem
        .effective
        .check_admissible()
        .map_err(|reason| Error::InvalidTensor { cell: 0, reason })?;
    let d = &problem.geometry.domain;
    let grid = StructuredGrid::covering((d.x0, d.x1), (d.y0, d.y1), nx, ny)?;
    let half = problem.geometry.membrane_half_width();
    let tol = 1e-8;
    let (Some(fl), Some(fr)) = (grid.x_face_at(-half, tol), grid.x_face_at(half, tol)) else {
        return Err(Error::UnderResolved(alloc::format!(
            "membrane boundaries at +-{half} do not fall on faces of a {nx}-cell grid"
        )));
    };
    let inside = |x: f64| x.abs() < half;
    let tensor = TensorField::from_fn(&grid, |x, _| if inside(x) { problem.effective } else { problem.bulk });
    let mask = CellMask::empty(&grid);
    let disc = assemble_diffusion(&grid, &tensor, &mask, &Boundaries::strip(problem.u_left, problem.u_right))?;
    let mut source = Vec::with_capacity(grid.len());
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let (x, _) = grid.center(i, j);
            source.push(if inside(x) { problem.source_membrane } else { problem.source_bulk });
        }
    }
    Ok(MacroSystem {
        grid,
        disc,
        drift: problem.drift.clone(),
        source,
        initial: alloc::vec![problem.initial; grid.len()],
        interface_faces: (fl, fr),
    })
}

impl MacroSystem {
    pub fn run(&self, cfg: &RunConfig) -> Result<MacroResult> {
        self.run_from(&self.initial, cfg)
    }

    pub fn run_from(&self, u0: &[f64], cfg: &RunConfig) -> Result<MacroResult> {
        let mut interface = Vec::new();
        let (fl, fr) = self.interface_faces;
        let transient = run_observed(&self.disc, &self.drift, &self.source, u0, cfg, |old, new, rec| {
            interface.push(InterfaceRecord {
                time: rec.time,
                left: self.disc.x_line_flux(fl, &self.drift, new, old),
                right: self.disc.x_line_flux(fr, &self.drift, new, old),
            });
        })?;
        Ok(MacroResult { transient, interface })
    }
}

/// Solves the macro problem to steady state.
pub fn run_macro(problem: &MacroProblem, nx: usize, ny: usize, cfg: &RunConfig) -> Result<MacroResult> {
    assemble_macro(problem, nx, ny)?.run(cfg)
}

/// Steady flux per unit height of the drift-free 1D three-layer problem,
/// signed along `+x`.
pub fn series_flux(problem: &MacroProblem) -> f64 {
    let half = problem.geometry.membrane_half_width();
    let outer = 1.0 - half;
    let resistance = outer / problem.bulk.d11 + 2.0 * half / problem.effective.d11 + outer / problem.bulk.d11;
    -(problem.u_right - problem.u_left) / resistance
}

/// L2 distances between a resolved micro field and a macro field on the
/// same grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Discrepancy {
    /// Cellwise difference over the bulk regions.
    pub bulk: f64,
    /// Difference of averages per periodicity cell: the micro field over
    /// its pores, the macro field over the whole cell.
    pub membrane: f64,
}

impl Discrepancy {
    pub fn total(&self) -> f64 {
        crate::math::sqrt(self.bulk * self.bulk + self.membrane * self.membrane)
    }
}

/// Compares `micro` (with obstacle `mask`) against `macro_u` on `grid`.
pub fn discrepancy(
    geometry: &DimensionlessGeometry,
    grid: &StructuredGrid,
    mask: &CellMask,
    micro: &[f64],
    macro_u: &[f64],
) -> Result<Discrepancy> {
    if micro.len() != grid.len() || macro_u.len() != grid.len() || !mask.matches(grid) {
        return Err(crate::error::invalid("fields", "must live on the same grid"));
    }
    let half = geometry.membrane_half_width();
    let area = grid.cell_area();
    let cells = geometry.cells.len();
    let mut bulk = 0.0;
    let mut pore = alloc::vec![(0.0, 0usize); cells];
    let mut full = alloc::vec![(0.0, 0usize); cells];
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let k = grid.index(i, j);
            let (x, y) = grid.center(i, j);
            if x.abs() >= half {
                let d = micro[k] - macro_u[k];
                bulk += d * d * area;
                continue;
            }
            let Some(c) = geometry.cell_index(y) else { continue };
            full[c].0 += macro_u[k];
            full[c].1 += 1;
            if mask.is_open(k) {
                pore[c].0 += micro[k];
                pore[c].1 += 1;
            }
        }
    }
    let mut membrane = 0.0;
    for c in 0..cells {
        if pore[c].1 == 0 || full[c].1 == 0 {
            continue;
        }
        let d = pore[c].0 / pore[c].1 as f64 - full[c].0 / full[c].1 as f64;
        membrane += d * d * full[c].1 as f64 * area;
    }
    Ok(Discrepancy { bulk: crate::math::sqrt(bulk), membrane: crate::math::sqrt(membrane) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{nondimensionalize, PhysicalGeometry};

    fn problem(eff: Tensor2) -> MacroProblem {
        let g = nondimensionalize(&PhysicalGeometry { ell: 1.0, h: 0.4, w: 0.25, eta: 0.08 }).unwrap();
        MacroProblem {
            geometry: g,
            bulk: Tensor2::diagonal(1.0, 0.1),
            effective: eff,
            drift: DriftPolynomial::zero(),
            source_bulk: 0.0,
            source_membrane: 0.0,
            u_left: 0.0,
            u_right: 1.0,
            initial: 0.0,
        }
    }

    #[test]
    fn misaligned_membrane_is_rejected() {
        let p = problem(Tensor2::diagonal(0.5, 0.05));
        assert!(matches!(assemble_macro(&p, 30, 8), Err(Error::UnderResolved(_))));
        let s = assemble_macro(&p, 32, 8).unwrap();
        assert_eq!(s.interface_faces, (12, 20));
    }

    #[test]
    fn three_layer_series_flux() {
        let p = problem(Tensor2::diagonal(0.25, 0.05));
        let sys = assemble_macro(&p, 64, 4).unwrap();
        let b = {
            let mut b = alloc::vec![0.0; sys.grid.len()];
            sys.disc.apply_bc(&mut b);
            b
        };
        let u = crate::linear_solver::solve_spd(
            sys.disc.operator(),
            &b,
            &crate::linear_solver::SolverConfig { rel_tolerance: 1e-14, ..Default::default() },
        )
        .unwrap()
        .x;
        let height = p.geometry.height();
        let q = sys.disc.x_line_flux(0, &p.drift, &u, &u) / height;
        assert!((q - series_flux(&p)).abs() < 1e-10, "{q} vs {}", series_flux(&p));
        let qi = sys.disc.x_line_flux(sys.interface_faces.0, &p.drift, &u, &u) / height;
        assert!((qi - q).abs() < 1e-10);
    }
}

//! Boundary conditions on the four edges of a structured grid.

use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::grid::StructuredGrid;

/// Data handed to an edge that is coupled to another domain.
///
/// Diffusion sees the edge as a Dirichlet edge with a per-node `trace`;
/// the advective part of the normal flux is prescribed per node as
/// `advective_flux` (positive means leaving the domain).
#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceCoupling {
    pub trace: Vec<f64>,
    pub advective_flux: Vec<f64>,
}

impl InterfaceCoupling {
    pub fn new(trace: Vec<f64>, advective_flux: Vec<f64>) -> Self {
        InterfaceCoupling { trace, advective_flux }
    }

    /// Coupling with a uniform trace and no advective flux.
    pub fn uniform(len: usize, trace: f64) -> Self {
        InterfaceCoupling { trace: alloc::vec![trace; len], advective_flux: alloc::vec![0.0; len] }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BoundaryCondition {
    Dirichlet(f64),
    ZeroFlux,
    Periodic,
    Interface(InterfaceCoupling),
}

impl BoundaryCondition {
    pub fn is_periodic(&self) -> bool {
        matches!(self, BoundaryCondition::Periodic)
    }

    /// Dirichlet value seen by node `k` along the edge, if any.
    pub fn trace_at(&self, k: usize) -> Option<f64> {
        match self {
            BoundaryCondition::Dirichlet(v) => Some(*v),
            BoundaryCondition::Interface(c) => Some(c.trace[k]),
            _ => None,
        }
    }
}

/// Which edge of the grid a face lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Edge {
    Left,
    Right,
    Bottom,
    Top,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Boundaries {
    pub left: BoundaryCondition,
    pub right: BoundaryCondition,
    pub bottom: BoundaryCondition,
    pub top: BoundaryCondition,
}

impl Boundaries {
    /// Same condition on every edge.
    pub fn all(bc: BoundaryCondition) -> Self {
        Boundaries { left: bc.clone(), right: bc.clone(), bottom: bc.clone(), top: bc }
    }

    /// Dirichlet data left and right, zero flux on the horizontal edges.
    pub fn strip(u_left: f64, u_right: f64) -> Self {
        Boundaries {
            left: BoundaryCondition::Dirichlet(u_left),
            right: BoundaryCondition::Dirichlet(u_right),
            bottom: BoundaryCondition::ZeroFlux,
            top: BoundaryCondition::ZeroFlux,
        }
    }

    pub fn edge(&self, e: Edge) -> &BoundaryCondition {
        match e {
            Edge::Left => &self.left,
            Edge::Right => &self.right,
            Edge::Bottom => &self.bottom,
            Edge::Top => &self.top,
        }
    }

    pub fn x_periodic(&self) -> bool {
        self.left.is_periodic()
    }

    pub fn y_periodic(&self) -> bool {
        self.bottom.is_periodic()
    }

    /// Checks pairing of periodic edges and interface data lengths.
    pub fn validate(&self, grid: &StructuredGrid) -> Result<()> {
        if self.left.is_periodic() != self.right.is_periodic() {
            return Err(Error::ConflictingBoundary("left/right: periodic on only one side"));
        }
        if self.bottom.is_periodic() != self.top.is_periodic() {
            return Err(Error::ConflictingBoundary("bottom/top: periodic on only one side"));
        }
        for (bc, len, name) in [
            (&self.left, grid.ny, "left"),
            (&self.right, grid.ny, "right"),
            (&self.bottom, grid.nx, "bottom"),
            (&self.top, grid.nx, "top"),
        ] {
            match bc {
                BoundaryCondition::Dirichlet(v) if !v.is_finite() => {
                    return Err(invalid("boundary", alloc::format!("{name}: non-finite Dirichlet value")));
                }
                BoundaryCondition::Interface(c) => {
                    if c.trace.len() != len || c.advective_flux.len() != len {
                        return Err(invalid(
                            "boundary",
                            alloc::format!("{name}: interface data must have {len} entries"),
                        ));
                    }
                    if c.trace.iter().chain(&c.advective_flux).any(|v| !v.is_finite()) {
                        return Err(invalid("boundary", alloc::format!("{name}: non-finite interface data")));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// True when no edge carries Dirichlet or interface data, so the
    /// diffusion operator has constants in its null space.
    pub fn is_pure_neumann(&self) -> bool {
        [&self.left, &self.right, &self.bottom, &self.top]
            .iter()
            .all(|bc| matches!(bc, BoundaryCondition::ZeroFlux | BoundaryCondition::Periodic))
    }
}

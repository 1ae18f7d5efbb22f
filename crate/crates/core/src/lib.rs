//! Finite-volume solvers for particle transport through a heterogeneous
//! membrane.
//!
//! The crate covers the whole multiscale chain on uniform structured grids:
//!
//! * [`geometry`] maps the physical strip, membrane and periodic obstacle
//!   array to dimensionless coordinates and rasterizes obstacles.
//! * [`discretization`] assembles divergence-form tensor diffusion with
//!   cross terms, upwinded polynomial drift and the boundary conditions.
//! * [`linear_solver`] provides preconditioned CG and BiCGSTAB.
//! * [`micro_solver`] resolves the obstacles explicitly (reference problem).
//! * [`cell_problem`] solves the regularized cell problems and extracts the
//!   effective tensor.
//! * [`macro_membrane`] solves the finite-thickness homogenized strip.
//! * [`thin_membrane`] solves the infinitely thin limit with a family of
//!   periodic membrane profiles coupled to two bulk domains.
//!
//! The crate is `no_std` (it needs `alloc`); file formats, configuration and
//! the command line live in the companion `membrane-sim` crate.
#![cfg_attr(not(any(test, feature = "std")), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

mod math;

pub mod boundary;
pub mod cell_problem;
pub mod discretization;
pub mod drift;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod linear_solver;
pub mod macro_membrane;
pub mod micro_solver;
pub mod sparse;
pub mod thin_membrane;
pub mod transport;

pub use boundary::{BoundaryCondition, Boundaries, InterfaceCoupling};
pub use drift::DriftPolynomial;
pub use error::{Error, Result};
pub use grid::{CellMask, ScalarField, StructuredGrid, Tensor2, TensorField};
pub use sparse::SparseOperator;

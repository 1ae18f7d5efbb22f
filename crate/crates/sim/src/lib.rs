//! Configuration, experiment orchestration and file outputs around
//! [`membrane_core`].
//!
//! [`config`] defines the JSON scenario schema, [`scenario`] maps it to the
//! dimensionless solvers, [`output`] and [`plot`] write CSV tables, grid
//! dumps, manifests and SVG figures, and [`cli`] ties them to the
//! `membrane-sim` binary.

pub mod cli;
pub mod config;
pub mod error;
pub mod output;
pub mod plot;
pub mod scenario;

pub use membrane_core as core;

//! Fitting of Voronoi, Laguerre and anisotropic power diagrams (GBPDs) to
//! voxelized 3D grain maps, together with the discrepancy measures used to
//! judge the fits.
//!
//! The crate is organized around a small number of building blocks:
//!
//! * [`grid`] — the voxel grain map, its I/O format and per-grain geometry
//!   (moments, interfaces, boundaries, neighbor sets).
//! * [`diagram`] — generators, power distances and discretization of
//!   tessellations onto the voxel grid.
//! * [`heuristics`], [`lpfit`], [`cefit`], [`gdfit`], [`neperfit`] — the five
//!   fitting algorithm families.
//! * [`metrics`] — the seven performance measures and their tabulation.
//! * [`synth`] — synthetic ground-truth generation for inversion tests.
//!
//! See the `examples/` directory for one runnable example per capability and
//! the `grainfit` binary for the `fit`/`eval`/`synth`/`slice` command line.

pub mod cefit;
pub mod cli;
pub mod diagram;
pub mod edt;
pub mod error;
pub mod gdfit;
pub mod grid;
pub mod heuristics;
pub mod lpfit;
pub mod metrics;
pub mod neperfit;
pub mod netflow;
pub mod report;
pub mod simplex;
pub mod synth;

pub use diagram::{Generator, LabelField, ModelKind, Tessellation};
pub use error::{Error, Result};
pub use grid::{GrainMap, GrainMoments};

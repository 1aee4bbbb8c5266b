//! Reconstruction toolkit for piecewise-constant conductivity and doping
//! profiles from boundary current measurements, plus a discrete lattice
//! identification model with an exact layer-stripping recovery.

pub mod config;
pub mod elliptic;
pub mod error;
pub mod experiment;
pub mod kaczmarz;
pub mod lattice;
pub mod levelset;
pub mod mesh;
pub mod metrics;
pub mod noise;
pub mod phantom;
pub mod sparse;

pub use error::{Error, Result};
pub use mesh::{BoundaryLabel, BoundarySpec, Edge, EdgeSpec, Grid, Norms, ScalarField};
pub use sparse::{SolverKind, SparseSystem};

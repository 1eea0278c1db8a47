//! Taylor-Hood finite elements for the evolutionary Boussinesq system with
//! open-boundary conditions.

// Element kernels index several small arrays with the same local index.
#![allow(clippy::needless_range_loop)]

pub mod assembly;
pub mod benchmark;
pub mod boundary_conditions;
pub mod error;
pub mod fem;
pub mod io;
pub mod linalg;
pub mod mesh;
pub mod spaces;
pub mod timestepper;
pub mod verification;

pub use error::{Error, Result};

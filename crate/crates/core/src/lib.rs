//! Simulation and analytics toolkit for monitored lattice fermions.
//!
//! Trajectory engines (exact Gaussian, time-dependent Hartree-Fock and an
//! exact many-body reference), observables on correlation matrices,
//! ensemble orchestration with bootstrap statistics, and numerical
//! versions of the renormalization-group and field-theory formulas.

pub mod analytics;
pub mod ensemble;
pub mod error;
pub mod gaussian;
pub mod io;
pub mod linalg;
pub mod model;
pub mod observables;
pub mod ode;
pub mod oracle;
pub mod special;
pub mod tdhf;

pub use error::{Error, Result};
pub use model::{Boundary, ModelParams};

pub use num_complex;

//! Simulation and energy auditing of rate-dependent damage coupled to
//! one-dimensional elastodynamics.
//!
//! A bar is discretized with `C¹` Hermite cubics for the displacement and
//! piecewise linear elements for the damage. Every time step minimizes an
//! incremental functional under an irreversibility constraint, and the
//! [`audit`] module checks the discrete energy balance of the result.

pub mod audit;
pub mod cli;
pub mod config;
pub mod convergence;
pub mod discretization;
pub mod error;
pub mod io;
pub mod linalg;
pub mod material;
pub mod registry;
pub mod scenarios;
pub mod stepper;

pub use error::{Error, Result};

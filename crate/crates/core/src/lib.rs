//! Simulation, nonlinear filtering and parameter estimation for a hidden
//! two-state telegraph signal observed in white Gaussian noise.

pub mod cli;
pub mod error;
pub mod experiments;
pub mod filter;
pub mod fisher;
pub mod io;
pub mod linalg;
pub mod mle;
pub mod model;
pub mod moments;
pub mod quadrature;
pub mod sim;

pub use error::{Error, Result};

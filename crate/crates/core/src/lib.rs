//! Drift estimation for fast/slow diffusions fitted with a coarse-grained
//! model: simulation, homogenized coefficients, likelihoods and sweeps.

pub mod cli;
pub mod error;
pub mod experiment;
pub mod homogenize;
pub mod likelihood;
pub mod models;
pub mod optimize;
pub mod output;
pub mod quadrature;
pub mod simulator;

pub use error::{Error, Result};

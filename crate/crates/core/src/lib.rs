//! Analysis and LQ control synthesis for stochastic descriptor systems
//! `E dx = (Ax + Bu) dt + (Cx + Du) dW` with singular `E`.
//!
//! The pipeline: decide well-posedness through matrix-pencil canonical
//! forms, reduce the singular LQ problem (finite or infinite horizon) to a
//! normal one of lower order, solve the associated Riccati equations, test
//! stochastic exact controllability, and validate the synthesized feedback
//! by Monte Carlo simulation.

pub mod cli;
pub mod config;
pub mod controllability;
pub mod error;
pub mod linalg;
pub mod pencil;
pub mod problem;
pub mod reduction;
pub mod riccati;
pub mod simulate;
#[doc(hidden)]
pub mod testutil;
pub mod wellposed;

pub use config::Config;
pub use error::{Error, Result};

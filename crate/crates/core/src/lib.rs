//! Simulation, estimation, and asymptotics for conjunction extremes of
//! vector-valued Gaussian processes.

#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::too_many_arguments,
    clippy::excessive_precision
)]

pub mod asymptotics;
pub mod conjunction;
pub mod constants;
pub mod error;
pub mod experiment;
pub mod orthant;
pub mod process;
pub mod profile;
pub mod rng;
pub mod sampler;
pub mod special;
pub mod stats;

mod parallel;

pub use error::{Error, Result};

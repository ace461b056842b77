//! Simulation, signal recovery and security analysis for continuous-variable
//! QKD with a locally generated local oscillator.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dsp;
pub mod error;
pub mod estimation;
pub mod keyrate;
pub mod model;
pub mod noise_budget;
pub mod postproc;
pub mod pulse;
pub mod simulator;

pub use error::{Error, Result};
pub use model::{QuadraturePairs, SnuValue, Stage, SystemParams, Units};

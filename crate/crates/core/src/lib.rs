//! Fitting and simulation of extreme fixed-length time series.
//!
//! Each series is whitened by a per-step autoregression, mapped to unit
//! Fréchet margins through an empirical/GPD mixture, and split into a cost
//! (radius) and an angle. Extremes are series whose cost exceeds a high
//! threshold; their angles are modelled by principal components and a
//! D-vine on the leading scores. Simulation reverses the chain, and the
//! validation module compares simulated and observed extremes.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod angular;
pub mod dataset;
pub mod error;
pub mod margins;
pub mod model;
pub mod pipeline;
pub mod polar;
pub mod simulator;
pub mod stats;
pub mod synthetic;
pub mod validation;
pub mod whitening;

pub use error::{Error, Result};

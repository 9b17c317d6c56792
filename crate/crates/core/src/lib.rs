//! Fitting and simulation engine for hourly wave parameters.

pub mod arma;
pub mod calendar;
pub mod config;
pub mod copula;
pub mod error;
pub mod ingest;
pub mod optim;
pub mod pipeline;
pub mod renewal;
pub mod residuals;
pub mod rng;
pub mod seasonal;
pub mod special;
pub mod stats;
pub mod steepness;
pub mod synthetic;
pub mod validate;

pub use error::{Error, Result};

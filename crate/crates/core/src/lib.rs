//! Spark spread option pricing under jump-diffusion spot models.
//!
//! A gas-fired plant is valued as a call on `F_e - heat_rate * F_g - cost`.
//! Closed forms, a jump-mixture series and a Monte Carlo oracle share one set
//! of model and contract types; [`run`] dispatches a JSON [`config::RunConfig`]
//! to any of them.

pub mod config;
pub mod error;
pub mod io;
pub mod mc_oracle;
pub mod models;
pub mod numeric;
pub mod pricing_closed;
pub mod pricing_series;
pub mod rng;
pub mod run;
pub mod simulate;
pub mod validation;

pub use error::{Error, Result};

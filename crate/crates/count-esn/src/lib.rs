//! Echo state network models for panels of count time series.
//!
//! The crate provides, per school (series), Poisson ESN fits by penalized
//! likelihood, a conjugate Bayesian Poisson ESN via multivariate log-gamma
//! machinery, hierarchical Poisson and negative binomial ESNs with
//! state-level pooling sampled by MCMC, intercept and INGARCH(1,1) baselines,
//! and a rolling one-step-ahead forecasting and scoring harness
//! (MSPE, MSLPE, interval score, interval coverage).

pub mod baselines;
pub mod dists;
pub mod error;
pub mod freq_esn;
pub mod panel;
pub mod reservoir;
pub mod rng;
pub mod simulate;

pub use error::{Error, Result};

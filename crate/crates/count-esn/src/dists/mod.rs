//! Samplers and densities for the nonstandard distributions the estimators
//! need: log-gamma, multivariate log-gamma (MLG), conditional MLG,
//! Pólya-Gamma, half-Cauchy, and inverse-gamma.
//!
//! All samplers are pure functions of their parameters and the supplied
//! generator, so chains are replayable from a seed.

mod ars;
mod cmlg;
mod mlg;
mod polya_gamma;
mod scalar;

pub use ars::{sample_log_concave, LogConcave};
pub use cmlg::{CmlgParams, CmlgSampler, DEFAULT_BURN_SCANS, DEFAULT_THIN_SCANS};
pub use mlg::{mlg_log_density, sample_mlg, MlgParams};
pub use polya_gamma::{sample_pg, DEFAULT_PG_TRUNC};
pub use scalar::{sample_half_cauchy, sample_inv_gamma, sample_log_gamma};

/// Shape parameter used wherever the MLG normal-approximation device is
/// invoked; 1000 is large enough that the MLG is indistinguishable from a
/// Gaussian at the tolerances used here.
pub const MLG_ALPHA: f64 = 1000.0;

//! First-hitting-time analysis for the stochastic MSD tropical-cyclone model.
//!
//! The crate is organised bottom-up:
//!
//! * [`msd`] holds the model vocabulary: parameters, phase-space states, the
//!   cyclonic drift field and its Jacobian.
//! * [`det`] integrates the deterministic ODE and extracts the onset time `T`.
//! * [`noise`] and [`sde`] simulate single stochastic trajectories until they
//!   reach the onset level, die out, or hit the horizon.
//! * [`ensemble`] fans trajectories out over a worker pool and aggregates
//!   onset probabilities, conditional moments and histograms.
//! * [`asymptotics`] computes the small-noise Gaussian approximation of the
//!   onset time through the covariance ODE.
//! * [`onedim`] evaluates exact quadrature formulas for a scalar diffusion,
//!   used as analytic oracles.
//! * [`quad`] and [`stats`] are the numerical utilities shared by the above.

pub mod asymptotics;
pub mod det;
pub mod ensemble;
mod error;
pub mod msd;
pub mod noise;
pub mod onedim;
pub mod quad;
pub mod sde;
pub mod stats;
pub mod sweep;

pub use error::{Error, Result};
pub use msd::{ModelParams, State};

/// Onset level used throughout the experiments.
pub const DEFAULT_ELL: f64 = 0.1;
/// Time step of the reference integrations.
pub const DEFAULT_DT: f64 = 1e-3;
/// Default simulation horizon in nondimensional time.
pub const DEFAULT_T_MAX: f64 = 50.0;

/// Formats a float with 17 significant digits, the precision used by every
/// data file the crate writes.
pub fn format_sig17(x: f64) -> String {
    format!("{x:.16e}")
}

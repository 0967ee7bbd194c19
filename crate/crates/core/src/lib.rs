//! Estimation of sign-constrained hierarchical marketing mix models.
//!
//! Media activity enters the response through a geometric carryover
//! (adstock) followed by a Weibull-CDF saturation curve. Coefficients may be
//! constrained nonnegative, and in the hierarchical model every coefficient
//! has one random draw per region around a shared fixed mean.
//!
//! Two estimators are provided:
//!
//! * [`hmc::run_chain`]: Hamiltonian Monte Carlo on the posterior, with the
//!   nonnegativity constraints enforced by reflecting trajectories off the
//!   boundary.
//! * [`mle::fit_mle`]: multistart projected limited-memory quasi-Newton on
//!   the truncated-normal likelihood.
//!
//! [`baseline::fit_adhoc`] implements the two-stage industry procedure
//! (grid-searched decay rate, then unconstrained least squares) for
//! comparison, and [`simulate`] generates the recovery scenarios.
//!
//! The crate is `no_std` (it needs `alloc`). File formats and the command
//! line live in the companion `mmm-cli` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod baseline;
pub mod diagnostics;
mod error;
pub mod hmc;
pub mod linalg;
pub mod math;
pub mod mle;
pub mod model;
pub mod posterior;
pub mod simulate;
pub mod transforms;

pub use error::{Error, Result};

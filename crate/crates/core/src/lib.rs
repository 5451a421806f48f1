//! Learning robot inverse dynamics with Gaussian processes and turning the
//! learned model into a forward-dynamics estimator.
//!
//! The crate is organised bottom-up:
//!
//! * [`rbd`] is an exact rigid-body-dynamics engine (recursive Newton-Euler on
//!   standard Denavit-Hartenberg chains). It generates data and serves as the
//!   ground truth everywhere else.
//! * [`trajgen`] builds excitation trajectories from low-pass filtered noise
//!   and labels them with torques.
//! * [`kernels`] and [`gp`] implement exact GP regression with squared
//!   exponential, polynomial, geometrically inspired polynomial (GIP) and
//!   semiparametric covariances.
//! * [`inv2fwd`] probes a learned inverse-dynamics model at structured inputs
//!   to recover gravity, inertia and bias torques, then solves for
//!   accelerations.
//! * [`experiments`] holds the direct forward-dynamics baseline, error metrics
//!   and the benchmark sweeps driven by the `dynlearn` binary.

pub mod cli;
pub mod error;
pub mod experiments;
pub mod gp;
pub mod inv2fwd;
pub mod kernels;
pub mod rbd;
pub mod trajgen;

pub use error::{Error, Result};

/// Version string embedded in every generated artifact.
pub const CODE_VERSION: &str = concat!("dynlearn ", env!("CARGO_PKG_VERSION"));

//! Pilot-free near-field beam tracking simulator.
//!
//! A mobile single-antenna user moves through the radiative near field of a
//! large ULA. The base station models the user's angle and range over a
//! sliding window as low-order polynomials, fits them by maximum likelihood
//! from fed-back payload samples, and probes with Thompson-sampled beams drawn
//! from a Fisher-information posterior. Pure exploitation, an EKF with
//! exhaustive codebook sweeps, and a coherence-time local-sweep scheme are
//! provided as baselines.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod cli;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod policies;
pub mod trajectory;

mod numeric;
mod plot;
mod spline;

pub use error::{Error, Result};

//! Quantum non-demolition photon counting: a stochastic model of a damped
//! cavity field probed by a stream of atomic clocks, and the Bayesian
//! decimation decoder that turns the detection stream back into a
//! photon-number distribution.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the command
//! line and parallel ensembles live in the `qnd-lab` companion crate.
//!
//! Module map:
//!
//! - [`field`]: photon-number distributions and the cavity damping law.
//! - [`probe`]: the Ramsey-fringe likelihood of one atomic detection.
//! - [`decoder`]: single-atom and batch Bayes updates, profiles, sliding traces.
//! - [`sim`]: birth–death field trajectories interleaved with pulsed probes.
//! - [`calibration`]: synthetic η₀ batches and the seven-parameter fringe fit.
//! - [`analysis`]: histograms, Poisson-peak fits, staircases, dwell times, latencies.
//! - [`adaptive`]: the binary adaptive-phase strategy.
#![no_std]
#![forbid(unsafe_code)]
// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod adaptive;
pub mod analysis;
pub mod calibration;
pub mod decoder;
mod error;
pub mod field;
mod math;
pub mod optim;
pub mod probe;
pub mod sim;

pub use error::{Error, Result};
pub use field::{CavityParams, PhotonDistribution};
pub use probe::{Outcome, PhaseIndex, ProbeParams};

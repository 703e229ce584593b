//! Hidden-Markov-model estimation of fading-channel state processes from
//! amplitude observations.
//!
//! A land-mobile receiver sees slow state changes (line of sight, shadowing,
//! blockage) overlaid with fast multipath fading. This crate models that as a
//! hidden Markov chain whose per-state amplitude densities are known families
//! (Gaussian, Rayleigh, Rice, lognormal) and estimates the chain parameters
//! from an observed amplitude sequence:
//!
//! - [`distributions`] — emission density families, Bhattacharyya separability
//!   and mixture evaluation.
//! - [`markov`] — finite-state chains, stationary analysis, mean state
//!   durations and joint state/observation simulation.
//! - [`hmm`] — log-domain forward-backward inference and Baum-Welch
//!   re-estimation of transition and initial-state probabilities with the
//!   emission densities held fixed.
//! - [`baselines`] — threshold classifiers with optional moving-average
//!   pre-filtering, plus empirical transition estimation and error scoring.
//! - [`fitting`] — simulated-annealing fit of a fixed-family mixture to an
//!   empirical amplitude density.
//! - [`preprocess`] — trace ingestion, dB conversion and spatial
//!   down-sampling so successive samples are approximately independent.
//! - [`cli`] — the experiment harness behind the `lmsc-hmm` binary
//!   (simulation, Baum-Welch runs, benchmark sweeps, the full measurement
//!   pipeline) with reproducible seeding and CSV/JSON outputs.
//!
//! Every estimator takes an explicit seeded RNG or a seed in its config, so
//! identical inputs always reproduce identical outputs. See the crate
//! examples for one runnable program per capability.

pub mod baselines;
pub mod cli;
pub mod distributions;
pub mod fitting;
pub mod hmm;
pub mod markov;
pub mod preprocess;

mod error;

pub use error::{Error, Result};

//! Localization of cellular handsets from the serving cell's ID and RSSI
//! history alone.
//!
//! The area of interest is gridded; each cell is a hidden state, each
//! `(serving tower, RSSI bin)` pair an observation symbol. Emission
//! histograms come from war-driving fingerprints, transitions are uniform
//! over grid neighbours, and the prior is the stationary distribution of
//! that chain. A sliding window of recent observations is Viterbi-decoded
//! and the last state's cell center is the estimate.
//!
//! Cell-ID, single-tower KNN, and single-sample Bayesian baselines, a
//! synthetic GSM world, and an evaluation harness round out the crate.

pub mod baselines;
pub mod cli;
pub mod error;
pub mod eval;
pub mod geo;
pub mod hmm;
pub mod ingest;
pub mod sim;

pub use error::{Error, Result};

//! Bayesian hidden semi-Markov models whose state durations follow
//! zero-truncated Poisson laws with covariate-dependent, time-varying rates.
//!
//! The crate covers the probability kernels ([`dist`]), the model and its
//! likelihoods ([`model`]), explicit-duration decoding ([`decoding`]), the
//! Metropolis-within-Gibbs sampler with per-iteration data subsampling
//! ([`sampler`]), the segment-wise AR(1) simulation and coverage study
//! ([`simulation`]), posterior diagnostics ([`diagnostics`]) and CSV
//! ingestion with covariate engineering ([`ingest`]).

pub mod decoding;
pub mod diagnostics;
pub mod dist;
mod error;
pub mod ingest;
pub mod model;
pub mod rng;
pub mod sampler;
pub mod simulation;

pub use error::{HsmmError, Result};
pub use model::{Model, ModelParams, Segmentation, TimeSeriesData};

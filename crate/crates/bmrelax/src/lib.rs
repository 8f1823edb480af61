//! Continuous relaxations of Boltzmann machine priors, with the smoothing,
//! sampling, and training machinery needed to use them in an
//! importance-weighted variational model at desk scale.
//!
//! What lives where:
//!
//! - [`rbm`] — Boltzmann machine parameters, energy, exact small-D oracles
//!   (log partition, relaxed log-density, moments), block Gibbs sampling.
//! - [`smoothing`] — overlapping smoothing families r(ζ|z) (exponential,
//!   uniform+exp, power-function, Gaussian, shifted Gaussian): densities,
//!   CDFs, mixtures, and the (b, c) energy-augmentation coefficients.
//! - [`reparam`] — inverse-CDF sampling of two-component smoothing mixtures
//!   and implicit-function-theorem gradients dζ/dq, dζ/dβ.
//! - [`relaxation`] — the two continuous relaxations of the Boltzmann prior:
//!   mean-field on the augmented machine, and the Gaussian-integral form.
//! - [`samplers`] — negative-phase samplers (PCD, population annealing) and
//!   AIS log-partition estimation.
//! - [`nn`] — small dense networks (linear / 2×200-tanh MLP) with
//!   hand-written reverse-mode gradients and Adam.
//! - [`model`] — hierarchical posterior, Bernoulli decoder, IW bound,
//!   training loop, and discrete evaluation.
//! - [`data`] — IDX and plain-text dataset loading, static binarization,
//!   synthetic mode-mixture generation.
//! - [`checkpoint`] — versioned binary key-value container for model and
//!   sampler state.
//! - [`diag`] — the diagnostic experiments behind the CLI: gradient-variance
//!   tradeoff curves, mean-field KL traces, inverse-CDF curves, PA-vs-PCD
//!   twin training.
//! - [`cli`] — argument parsing and the `train` / `eval` / `diag-*`
//!   subcommands.
//!
//! Determinism: every stochastic routine draws from a named ChaCha stream
//! addressed by (seed, purpose, index) — see [`rng`] — so all outputs are
//! pure functions of (seed, config).

pub mod checkpoint;
pub mod cli;
pub mod data;
pub mod diag;
pub mod error;
pub mod math;
pub mod model;
pub mod nn;
pub mod rbm;
pub mod relaxation;
pub mod reparam;
pub mod rng;
pub mod samplers;
pub mod smoothing;

pub use error::{Error, Result};

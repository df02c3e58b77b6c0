//! Data valuation through machine unlearning.
//!
//! Trains small dense networks on tabular data, estimates each data point's
//! (or subset's) Shapley value by unlearning it from a single pre-trained
//! model instead of retraining from scratch, and ships the classical
//! baselines (retraining Shapley, KNN Shapley, Beta Shapley, influence
//! scores) plus the evaluation harness used to compare them.
//!
//! Entry points:
//! - [`shapley::mc_shapley`] / [`shapley::exact_shapley`] over any utility
//! - [`shapley::make_unlearn_utility`] for the unlearning-based utility
//! - [`shapley::partial_value`] for valuing one subset without a full run
//! - [`harness`] for detection curves, removal curves, and timing
//!
//! The `examples/` directory has one runnable program per capability.

pub mod audit;
pub mod baselines;
pub mod config;
pub mod data;
pub mod error;
pub mod experiment;
pub mod harness;
pub mod model;
pub mod rng;
pub mod shapley;
pub mod train;
pub mod unlearn;

pub use error::{Result, ValuationError};

//! Open-world website fingerprinting with precision optimizers.
//!
//! The crate turns packet-direction/timing traces into per-class match
//! scores with six classic classifier pipelines, lets precision optimizers
//! (POs) reject low-confidence positive decisions, and scores the outcome
//! with r-precision and its Wald/Wilson interval bounds.
//!
//! Module map:
//!
//! * [`traces`]: cells, packet sequences, datasets, `AxB+C` specs, folds.
//! * [`features`]: per-attack representations of a packet sequence.
//! * [`distances`]: sequence-to-sequence and sequence-to-class distances.
//! * [`classifiers`]: training and match scoring for all six attacks.
//! * [`optimizers`]: confidence, distance and ensemble POs.
//! * [`metrics`]: confusion tallies, r-precision and interval bounds.
//! * [`defenses`]: random padding and constant-rate padding.
//! * [`harness`]: experiments, sweeps, scenarios and synthetic data.
//! * [`reporting`]: table and plot-data rendering of sweep results.

pub mod classifiers;
pub mod defenses;
pub mod distances;
mod error;
pub mod features;
pub mod harness;
pub mod metrics;
pub mod optimizers;
pub mod reporting;
pub mod rng;
pub mod traces;

pub use error::{Error, Result};

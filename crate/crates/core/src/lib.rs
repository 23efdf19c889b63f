//! Contrastive prompt optimization.
//!
//! Each iteration scores the current beam leader on a batch, clusters the
//! graded instances, samples contrastive examples per cluster in proportion to
//! the cluster's error rate, asks an optimizer model for textual gradients,
//! keeps those gradients in a decaying memory pool, and rewrites the beam along
//! the strongest remembered directions. A UCB bandit picks the next beam.

pub mod bacs;
pub mod backends;
pub mod checkpoint;
pub mod clustering;
pub mod config;
pub mod embedding;
pub mod error;
pub mod evaluation;
pub mod evolution;
pub mod mgsc;
pub mod rng;
pub mod types;

pub use config::{ProjectConfig, RunConfig};
pub use error::{Error, Result};
pub use evolution::{Engine, IterationTrace, OptimizeReport};
pub use types::{BeamEntry, CandidateStats, Example, Prediction, RunState, TextualGradient};

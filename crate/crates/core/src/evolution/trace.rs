use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bacs::ClusterReport;
use crate::config::RunConfig;

/// Short stable identifier for a prompt text.
pub fn prompt_digest(prompt: &str) -> String {
    let digest = Sha256::digest(prompt.as_bytes());
    digest[..6].iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamSnapshot {
    pub digest: String,
    pub score: f64,
    pub pulls: u64,
}

/// What one iteration did, one JSON line per iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub iteration: u64,
    pub batch_size: usize,
    pub batch_accuracy: f64,
    pub clusters: Vec<ClusterReport>,
    pub quotas: Vec<usize>,
    pub gradients_admitted: usize,
    pub pool_size: usize,
    pub refined_directions: usize,
    pub candidates_generated: usize,
    pub ucb_pulls: u64,
    pub beam: Vec<BeamSnapshot>,
    pub leader_prompt: String,
    /// Held-out score of the new beam leader.
    pub leader_score: f64,
    pub best_score: f64,
}

/// Final summary of an optimization run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeReport {
    pub initial_prompt: String,
    pub initial_score: f64,
    pub initial_test_score: Option<f64>,
    pub best_prompt: String,
    pub best_score: f64,
    pub best_test_score: Option<f64>,
    /// Beam leader after the last iteration.
    pub final_prompt: String,
    pub iterations_run: u64,
    pub iterations: Vec<IterationSummary>,
    pub config: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationSummary {
    pub iteration: u64,
    pub batch_accuracy: f64,
    pub leader_score: f64,
    pub best_score: f64,
    pub pool_size: usize,
    pub candidates_generated: usize,
}

impl From<&IterationTrace> for IterationSummary {
    fn from(t: &IterationTrace) -> Self {
        Self {
            iteration: t.iteration,
            batch_accuracy: t.batch_accuracy,
            leader_score: t.leader_score,
            best_score: t.best_score,
            pool_size: t.pool_size,
            candidates_generated: t.candidates_generated,
        }
    }
}

//! Domain types shared across the optimizer.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// A query/answer pair from a task dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub query: String,
    pub answer: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, String>,
}

impl Example {
    pub fn new(id: impl Into<String>, query: impl Into<String>, answer: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            query: query.into(),
            answer: answer.into(),
            metadata: BTreeMap::new(),
        }
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.metadata.insert(key.into(), value.into());
        self
    }
}

/// A task-model output for one example, already graded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub example_id: String,
    pub raw_output: String,
    pub extracted_answer: String,
    pub correct: bool,
    pub score: f64,
}

/// A batch instance placed in embedding space.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedInstance {
    pub example_id: String,
    pub embedding: Vec<f64>,
    pub correct: bool,
}

/// One entry of the momentum gradient pool.
///
/// `current_weight` always equals `initial_weight * gamma^(t - birth_iteration)`
/// for the iteration `t` of the last decay step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextualGradient {
    pub id: String,
    pub text: String,
    pub initial_weight: f64,
    pub birth_iteration: u64,
    pub current_weight: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_cluster: Option<usize>,
    #[serde(default)]
    pub embedding: Vec<f64>,
}

impl TextualGradient {
    /// A freshly generated gradient with unit weight.
    pub fn fresh(id: impl Into<String>, text: impl Into<String>, iteration: u64) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            initial_weight: 1.0,
            birth_iteration: iteration,
            current_weight: 1.0,
            source_cluster: None,
            embedding: Vec::new(),
        }
    }
}

/// Bandit bookkeeping for one candidate prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateStats {
    pub prompt_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_gradient_id: Option<String>,
    pub pulls: u64,
    pub score_sum: f64,
}

impl CandidateStats {
    pub fn new(prompt_text: impl Into<String>) -> Self {
        Self {
            prompt_text: prompt_text.into(),
            parent_id: None,
            source_gradient_id: None,
            pulls: 0,
            score_sum: 0.0,
        }
    }

    /// Empirical mean score; zero for an arm that was never pulled.
    pub fn mean(&self) -> f64 {
        if self.pulls == 0 {
            0.0
        } else {
            self.score_sum / self.pulls as f64
        }
    }
}

/// A beam member carried between iterations together with its bandit record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamEntry {
    pub prompt_text: String,
    pub score: f64,
    pub pulls: u64,
    pub score_sum: f64,
}

impl BeamEntry {
    pub fn from_stats(stats: &CandidateStats) -> Self {
        Self {
            prompt_text: stats.prompt_text.clone(),
            score: stats.mean(),
            pulls: stats.pulls,
            score_sum: stats.score_sum,
        }
    }

    pub fn to_stats(&self) -> CandidateStats {
        CandidateStats {
            prompt_text: self.prompt_text.clone(),
            parent_id: None,
            source_gradient_id: None,
            pulls: self.pulls,
            score_sum: self.score_sum,
        }
    }
}

/// Seed material for every random stream of a run.
///
/// Streams are derived from `(seed, label)` so the root seed is the whole state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
}

/// The checkpointable state of an optimization run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunState {
    /// Number of completed iterations.
    pub iteration: u64,
    /// Sorted by descending score; ties keep insertion order.
    pub beam: Vec<BeamEntry>,
    pub pool: Vec<TextualGradient>,
    pub bandit_total: u64,
    pub rng: RngState,
    pub best_prompt: String,
    /// Held-out score of `best_prompt`.
    pub best_score: f64,
}

impl RunState {
    pub fn new(seed: u64, initial_prompt: impl Into<String>) -> Self {
        let prompt = initial_prompt.into();
        Self {
            iteration: 0,
            beam: vec![BeamEntry {
                prompt_text: prompt.clone(),
                score: 0.0,
                pulls: 0,
                score_sum: 0.0,
            }],
            pool: Vec::new(),
            bandit_total: 0,
            rng: RngState { seed },
            best_prompt: prompt,
            best_score: 0.0,
        }
    }

    pub fn leader(&self) -> Option<&BeamEntry> {
        self.beam.first()
    }
}

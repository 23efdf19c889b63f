//! Versioned JSON checkpoints of [`RunState`].

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{BeamEntry, RngState, RunState, TextualGradient};

pub const CHECKPOINT_VERSION: u64 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    version: u64,
    iteration: u64,
    beam: Vec<BeamEntry>,
    pool: Vec<TextualGradient>,
    bandit_total: u64,
    rng: RngState,
    best_prompt: String,
    best_score: f64,
}

pub fn to_json(state: &RunState) -> String {
    let doc = Document {
        version: CHECKPOINT_VERSION,
        iteration: state.iteration,
        beam: state.beam.clone(),
        pool: state.pool.clone(),
        bandit_total: state.bandit_total,
        rng: state.rng,
        best_prompt: state.best_prompt.clone(),
        best_score: state.best_score,
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("run state serializes");
    text.push('\n');
    text
}

pub fn from_json(text: &str) -> Result<RunState> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::CheckpointSchema(e.to_string()))?;
    let version = value
        .get("version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| Error::CheckpointSchema("missing integer `version`".into()))?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::CheckpointVersion {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let doc: Document =
        serde_json::from_value(value).map_err(|e| Error::CheckpointSchema(e.to_string()))?;
    Ok(RunState {
        iteration: doc.iteration,
        beam: doc.beam,
        pool: doc.pool,
        bandit_total: doc.bandit_total,
        rng: doc.rng,
        best_prompt: doc.best_prompt,
        best_score: doc.best_score,
    })
}

/// Writes to a sibling temp file and renames it over `path`, so a reader never
/// sees a partial checkpoint.
pub fn save(state: &RunState, path: &Path) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, to_json(state)).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<RunState> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_json(&text)
}

//! Run configuration and the on-disk config document.
//!
//! The config file is TOML. [`RunConfig`] fields sit at the top level under
//! their exact names; dataset, encoder, backend and simulation settings live in
//! their own tables.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backends::BackendConfig;
use crate::embedding::EncoderSpec;
use crate::error::{Error, Result};
use crate::evaluation::DatasetSpec;

/// Prompt the beam starts from when the config does not provide one.
pub const DEFAULT_INITIAL_PROMPT: &str =
    "You are an expert at accomplishing tasks. You are a highly capable problem-solver.";

/// Default batch sizes swept by `simulate`.
pub const DEFAULT_SWEEP: [usize; 7] = [4, 8, 16, 32, 64, 128, 256];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub batch_size: usize,
    pub iterations: u64,
    pub beam_width: usize,
    pub candidates_per_iter: usize,
    pub total_quota: usize,
    pub instance_clusters: usize,
    pub gradient_clusters: usize,
    pub decay: f64,
    pub ucb_alpha: f64,
    pub top_n_per_cluster: usize,
    pub seed: u64,
    pub eval_minibatch: usize,
    pub ucb_budget: usize,
    pub pool_min_weight: f64,
    pub pool_cap: usize,
    pub parallelism: usize,
    pub retries: u32,
    /// Fraction of the training split held out for candidate selection.
    pub eval_fraction: f64,
    pub initial_prompt: Option<String>,
    pub optimizer_temperature: f64,
    pub task_temperature: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            batch_size: 128,
            iterations: 20,
            beam_width: 4,
            candidates_per_iter: 10,
            total_quota: 30,
            instance_clusters: 14,
            gradient_clusters: 10,
            decay: 0.9,
            ucb_alpha: 1.0,
            top_n_per_cluster: 2,
            seed: 0,
            eval_minibatch: 16,
            ucb_budget: 320,
            pool_min_weight: 0.01,
            pool_cap: 500,
            parallelism: 8,
            retries: 3,
            eval_fraction: 0.25,
            initial_prompt: None,
            optimizer_temperature: 0.7,
            task_temperature: 0.0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.batch_size == 0 {
            return fail("batch_size must be >= 1");
        }
        if self.beam_width == 0 {
            return fail("beam_width must be >= 1");
        }
        if self.total_quota == 0 {
            return fail("total_quota must be >= 1");
        }
        if self.instance_clusters == 0 {
            return fail("instance_clusters must be >= 1");
        }
        if self.gradient_clusters == 0 {
            return fail("gradient_clusters must be >= 1");
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return fail("decay must lie in (0, 1]");
        }
        if self.ucb_alpha.is_nan() || self.ucb_alpha < 0.0 {
            return fail("ucb_alpha must be >= 0");
        }
        if self.top_n_per_cluster == 0 {
            return fail("top_n_per_cluster must be >= 1");
        }
        if self.eval_minibatch == 0 {
            return fail("eval_minibatch must be >= 1");
        }
        if self.pool_min_weight.is_nan() || self.pool_min_weight < 0.0 {
            return fail("pool_min_weight must be >= 0");
        }
        if self.pool_cap == 0 {
            return fail("pool_cap must be >= 1");
        }
        if self.parallelism == 0 {
            return fail("parallelism must be >= 1");
        }
        if !(self.eval_fraction > 0.0 && self.eval_fraction < 1.0) {
            return fail("eval_fraction must lie in (0, 1)");
        }
        if self.optimizer_temperature < 0.0 || self.task_temperature < 0.0 {
            return fail("temperatures must be >= 0");
        }
        Ok(())
    }

    pub fn initial_prompt(&self) -> &str {
        self.initial_prompt
            .as_deref()
            .unwrap_or(DEFAULT_INITIAL_PROMPT)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub batch_sizes: Vec<usize>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            batch_sizes: DEFAULT_SWEEP.to_vec(),
        }
    }
}

/// Everything a config file describes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProjectConfig {
    #[serde(flatten)]
    pub run: RunConfig,
    /// Absent only when the synthetic backend generates its own data.
    #[serde(default)]
    pub dataset: Option<DatasetSpec>,
    #[serde(default)]
    pub encoder: EncoderSpec,
    #[serde(default)]
    pub backend: BackendConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
}

impl ProjectConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::from_value(parse_document(text)?)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        let mut doc = parse_document(&text)?;
        apply_overrides(&mut doc, overrides)?;
        let mut cfg = Self::from_value(doc)?;
        if let Some(base) = path.parent() {
            cfg.resolve_paths(base);
        }
        Ok(cfg)
    }

    pub fn from_value(mut doc: toml::Table) -> Result<Self> {
        fn section<T: serde::de::DeserializeOwned>(doc: &mut toml::Table, name: &str) -> Result<Option<T>> {
            doc.remove(name)
                .map(|v| v.try_into().map_err(|e: toml::de::Error| Error::Config(format!("[{name}]: {e}"))))
                .transpose()
        }
        let dataset = section(&mut doc, "dataset")?;
        let encoder = section(&mut doc, "encoder")?.unwrap_or_default();
        let backend = section(&mut doc, "backend")?.unwrap_or_default();
        let simulate = section(&mut doc, "simulate")?.unwrap_or_default();
        // what is left must be run settings; RunConfig rejects unknown keys
        let run: RunConfig = toml::Value::Table(doc)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let cfg = Self {
            run,
            dataset,
            encoder,
            backend,
            simulate,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.run.validate()?;
        self.encoder.validate()?;
        if let Some(ds) = &self.dataset {
            ds.validate()?;
        }
        self.backend.validate()?;
        if self.dataset.is_none() && !self.backend.is_synthetic() {
            return Err(Error::Config(
                "a [dataset] block is required unless the backend is synthetic".into(),
            ));
        }
        Ok(())
    }

    /// Makes relative dataset and template paths relative to the config file.
    fn resolve_paths(&mut self, base: &Path) {
        if let Some(ds) = &mut self.dataset {
            ds.path = base.join(&ds.path);
            if let Some(test) = &ds.test_path {
                ds.test_path = Some(base.join(test));
            }
        }
        self.backend.resolve_paths(base);
    }
}

fn parse_document(text: &str) -> Result<toml::Table> {
    text.parse::<toml::Table>()
        .map_err(|e| Error::Config(format!("config parse error: {e}")))
}

/// Applies `key=value` overrides onto a parsed config document.
///
/// Dotted keys address nested tables (`dataset.path=...`). Values are parsed
/// as TOML literals and fall back to plain strings.
pub fn apply_overrides(doc: &mut toml::Table, overrides: &[String]) -> Result<()> {
    for item in overrides {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{item}` is not key=value")))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::Config(format!("override `{item}` has an empty key")));
        }
        let value = parse_literal(raw.trim());
        let mut parts: Vec<&str> = key.split('.').collect();
        let leaf = parts.pop().unwrap_or(key);
        let mut table = &mut *doc;
        for part in parts {
            let entry = table
                .entry(part.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            table = entry.as_table_mut().ok_or_else(|| {
                Error::Config(format!("override `{key}`: `{part}` is not a table"))
            })?;
        }
        table.insert(leaf.to_string(), value);
    }
    Ok(())
}

fn parse_literal(raw: &str) -> toml::Value {
    let probe = format!("v = {raw}");
    match probe.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

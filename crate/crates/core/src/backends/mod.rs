//! Task-model and optimizer-model backends.

pub mod http;
pub mod openai;
pub mod synthetic;
pub mod tags;
pub mod templates;

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::evaluation::Scorer;
use crate::types::{Example, Prediction, TextualGradient};

pub use self::http::RetryPolicy;
pub use self::openai::OpenAiChat;
pub use self::synthetic::{SyntheticConfig, SyntheticEnv, SyntheticOptimizer};
pub use self::templates::Templates;

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub system: String,
    pub user: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub model: String,
}

pub trait ChatClient: Send + Sync {
    fn complete(&self, req: &ChatRequest) -> Result<String>;
}

/// The model whose prompt is being optimized.
pub trait TaskModel: Send + Sync {
    /// Raw output for `example` under system prompt `prompt`.
    fn generate(&self, prompt: &str, example: &Example) -> Result<String>;
}

/// An example together with the task model's graded output.
#[derive(Debug, Clone, PartialEq)]
pub struct GradedInstance {
    pub example: Example,
    pub prediction: Prediction,
}

impl GradedInstance {
    pub fn render(&self) -> String {
        format!(
            "Input: {}\nExpected: {}\nModel output: {}",
            self.example.query, self.example.answer, self.prediction.raw_output
        )
    }
}

/// The contrastive sample of one cluster, materialized for the optimizer.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ContrastSample {
    /// `(correct, incorrect)`
    pub boundary_pairs: Vec<(GradedInstance, GradedInstance)>,
    pub hard_negatives: Vec<GradedInstance>,
    pub anchors: Vec<GradedInstance>,
}

impl ContrastSample {
    pub fn is_empty(&self) -> bool {
        self.boundary_pairs.is_empty() && self.hard_negatives.is_empty() && self.anchors.is_empty()
    }

    /// Every incorrect instance shown in the sample.
    pub fn failures(&self) -> impl Iterator<Item = &GradedInstance> {
        self.hard_negatives
            .iter()
            .chain(self.boundary_pairs.iter().map(|(_, neg)| neg))
    }
}

/// The model that critiques prompts and rewrites them.
pub trait OptimizerModel: Send + Sync {
    /// Textual gradients explaining the failures in `sample`.
    fn gradients(&self, prompt: &str, sample: &ContrastSample) -> Result<Vec<String>>;

    /// Rewrites of `prompt` addressing `gradient`.
    fn rewrite(&self, prompt: &str, gradient: &str) -> Result<Vec<String>>;
}

/// Runs the task model on one example and grades the output.
pub fn predict(task: &dyn TaskModel, scorer: &Scorer, prompt: &str, example: &Example) -> Result<Prediction> {
    let raw = task.generate(prompt, example)?;
    Ok(scorer.grade(example, raw))
}

/// Produces pool-ready gradients with ids `{id_prefix}-{i}`.
pub fn generate_gradients(
    optimizer: &dyn OptimizerModel,
    prompt: &str,
    sample: &ContrastSample,
    iteration: u64,
    id_prefix: &str,
) -> Result<Vec<TextualGradient>> {
    if sample.is_empty() {
        return Err(Error::invalid("gradient generation needs at least one instance"));
    }
    let texts = optimizer.gradients(prompt, sample)?;
    Ok(texts
        .into_iter()
        .enumerate()
        .map(|(i, text)| TextualGradient::fresh(format!("{id_prefix}-{i}"), text, iteration))
        .collect())
}

pub fn generate_candidates(
    optimizer: &dyn OptimizerModel,
    prompt: &str,
    gradient: &TextualGradient,
) -> Result<Vec<String>> {
    if gradient.text.trim().is_empty() {
        return Err(Error::invalid("cannot rewrite with an empty gradient"));
    }
    optimizer.rewrite(prompt, &gradient.text)
}

/// Task model backed by a chat endpoint: system = prompt, user = query.
pub struct LlmTaskModel {
    chat: Arc<dyn ChatClient>,
    model: String,
    temperature: f64,
    max_tokens: u32,
}

impl LlmTaskModel {
    pub fn new(chat: Arc<dyn ChatClient>, model: impl Into<String>, temperature: f64, max_tokens: u32) -> Self {
        Self {
            chat,
            model: model.into(),
            temperature,
            max_tokens,
        }
    }
}

impl TaskModel for LlmTaskModel {
    fn generate(&self, prompt: &str, example: &Example) -> Result<String> {
        self.chat.complete(&ChatRequest {
            system: prompt.to_string(),
            user: example.query.clone(),
            temperature: self.temperature,
            max_tokens: self.max_tokens,
            model: self.model.clone(),
        })
    }
}

const EMPTY_SECTION: &str = "(No samples of this type in this cluster.)";

pub fn render_gradient_request(template: &str, prompt: &str, sample: &ContrastSample) -> Result<String> {
    let section = |items: Vec<String>| {
        if items.is_empty() {
            EMPTY_SECTION.to_string()
        } else {
            items.join("\n")
        }
    };
    let pairs = section(
        sample
            .boundary_pairs
            .iter()
            .map(|(pos, neg)| {
                format!(
                    "- [SIMILAR & CORRECT]: {}\n- [SIMILAR & INCORRECT]: {}",
                    pos.render(),
                    neg.render()
                )
            })
            .collect(),
    );
    let negatives = section(
        sample
            .hard_negatives
            .iter()
            .map(|x| format!("- Failure Case: {}", x.render()))
            .collect(),
    );
    let anchors = section(
        sample
            .anchors
            .iter()
            .map(|x| format!("- Anchor Case: {}", x.render()))
            .collect(),
    );
    templates::render(
        template,
        &[
            ("prompt", prompt),
            ("boundary_pairs", &pairs),
            ("hard_negatives", &negatives),
            ("anchors", &anchors),
        ],
    )
}

/// Optimizer backed by a chat endpoint and the meta-prompt templates.
pub struct LlmOptimizer {
    chat: Arc<dyn ChatClient>,
    model: String,
    temperature: f64,
    max_tokens: u32,
    templates: Templates,
    /// Extra attempts when a reply has no parsable span.
    retries: u32,
}

impl LlmOptimizer {
    pub fn new(
        chat: Arc<dyn ChatClient>,
        model: impl Into<String>,
        temperature: f64,
        max_tokens: u32,
        templates: Templates,
        retries: u32,
    ) -> Self {
        Self {
            chat,
            model: model.into(),
            temperature,
            max_tokens,
            templates,
            retries,
        }
    }

    fn ask_for_spans(&self, user: String, what: &str) -> Result<Vec<String>> {
        let req = ChatRequest {
            system: String::new(),
            user,
            temperature: self.temperature,
            max_tokens: self.max_tokens,
            model: self.model.clone(),
        };
        for attempt in 0..=self.retries {
            let reply = self.chat.complete(&req)?;
            let spans = tags::parse_clean(&reply);
            if !spans.is_empty() {
                return Ok(spans);
            }
            warn!(attempt, what, "optimizer reply had no <START>/<END> spans");
        }
        warn!(what, "giving up after {} attempts; continuing without output", self.retries + 1);
        Ok(Vec::new())
    }
}

impl OptimizerModel for LlmOptimizer {
    fn gradients(&self, prompt: &str, sample: &ContrastSample) -> Result<Vec<String>> {
        let user = render_gradient_request(&self.templates.gradient, prompt, sample)?;
        self.ask_for_spans(user, "gradients")
    }

    fn rewrite(&self, prompt: &str, gradient: &str) -> Result<Vec<String>> {
        let user = templates::render(
            &self.templates.candidate,
            &[("prompt", prompt), ("new_constraint", gradient)],
        )?;
        self.ask_for_spans(user, "candidates")
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Synthetic,
    Openai,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub base_url: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub task_model: String,
    pub optimizer_model: String,
    pub max_tokens: u32,
    pub timeout_secs: u64,
    pub gradient_template: Option<PathBuf>,
    pub candidate_template: Option<PathBuf>,
    pub synthetic: SyntheticConfig,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Synthetic,
            base_url: "https://api.openai.com/v1".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            task_model: "Qwen3-30B-A3B-Instruct-2507".into(),
            optimizer_model: "Qwen3-30B-A3B-Thinking-2507".into(),
            max_tokens: 2048,
            timeout_secs: 120,
            gradient_template: None,
            candidate_template: None,
            synthetic: SyntheticConfig::default(),
        }
    }
}

impl BackendConfig {
    pub fn is_synthetic(&self) -> bool {
        self.kind == BackendKind::Synthetic
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            BackendKind::Synthetic => self.synthetic.validate(),
            BackendKind::Openai => {
                if self.base_url.is_empty() || self.task_model.is_empty() || self.optimizer_model.is_empty() {
                    return Err(Error::Config("openai backend needs base_url and model names".into()));
                }
                Ok(())
            }
        }
    }

    pub(crate) fn resolve_paths(&mut self, base: &Path) {
        for p in [&mut self.gradient_template, &mut self.candidate_template].into_iter().flatten() {
            *p = base.join(&*p);
        }
    }
}

/// The pair of models a run talks to.
#[derive(Clone)]
pub struct Backends {
    pub task: Arc<dyn TaskModel>,
    pub optimizer: Arc<dyn OptimizerModel>,
    /// Present for the synthetic backend, which also generates data.
    pub synthetic: Option<Arc<SyntheticEnv>>,
}

impl Backends {
    pub fn build(cfg: &BackendConfig, run: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        match cfg.kind {
            BackendKind::Synthetic => {
                let env = Arc::new(SyntheticEnv::new(&cfg.synthetic, run.seed)?);
                Ok(Self {
                    task: env.clone(),
                    optimizer: Arc::new(SyntheticOptimizer::new(env.clone())),
                    synthetic: Some(env),
                })
            }
            BackendKind::Openai => {
                let key = std::env::var(&cfg.api_key_env).ok();
                let chat: Arc<dyn ChatClient> = Arc::new(OpenAiChat::new(
                    &cfg.base_url,
                    key,
                    RetryPolicy::new(run.retries),
                    Duration::from_secs(cfg.timeout_secs),
                )?);
                let templates = Templates::load(cfg.gradient_template.as_deref(), cfg.candidate_template.as_deref())?;
                Ok(Self {
                    task: Arc::new(LlmTaskModel::new(
                        chat.clone(),
                        cfg.task_model.clone(),
                        run.task_temperature,
                        cfg.max_tokens,
                    )),
                    optimizer: Arc::new(LlmOptimizer::new(
                        chat,
                        cfg.optimizer_model.clone(),
                        run.optimizer_temperature,
                        cfg.max_tokens,
                        templates,
                        run.retries,
                    )),
                    synthetic: None,
                })
            }
        }
    }
}

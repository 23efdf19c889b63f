//! A deterministic stand-in for the task and optimizer models.
//!
//! Every example belongs to a category, and every category has a rule token.
//! The task model answers an example correctly with probability `p_hit` when
//! the prompt contains the token for its category and `p_miss` otherwise. The
//! optimizer reads the failing categories off a contrastive sample and proposes
//! adding their tokens.
//!
//! Grading draws one uniform number per `(env seed, example id)` and compares it
//! with the applicable probability, so a prompt's accuracy depends only on which
//! tokens it contains.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ContrastSample, OptimizerModel, TaskModel};
use crate::error::{Error, Result};
use crate::rng::{keyed_unit, seeded_rng};
use crate::types::Example;

pub const CATEGORY_KEY: &str = "category";
const PARAPHRASE: &str = " Think step by step.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub rule_tokens: Vec<String>,
    pub p_hit: f64,
    pub p_miss: f64,
    /// Defaults to the run seed.
    pub seed: Option<u64>,
    pub train_size: usize,
    pub test_size: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            rule_tokens: (0..5).map(|i| format!("T{i}")).collect(),
            p_hit: 0.95,
            p_miss: 0.35,
            seed: None,
            train_size: 400,
            test_size: 1000,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rule_tokens.is_empty() {
            return Err(Error::Config("synthetic env needs at least one rule token".into()));
        }
        if self.rule_tokens.iter().any(|t| t.trim().is_empty() || t.contains('\'')) {
            return Err(Error::Config("rule tokens must be non-empty and quote-free".into()));
        }
        if !(0.0 <= self.p_miss && self.p_miss < self.p_hit && self.p_hit <= 1.0) {
            return Err(Error::Config("synthetic env needs 0 <= p_miss < p_hit <= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticEnv {
    pub rule_tokens: Vec<String>,
    pub p_hit: f64,
    pub p_miss: f64,
    pub seed: u64,
    train_size: usize,
    test_size: usize,
    lexicon: Vec<Vec<String>>,
}

fn pseudo_word(rng: &mut impl Rng) -> String {
    const ONSETS: [&str; 12] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t"];
    const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];
    let syllables = rng.random_range(2..4);
    (0..syllables)
        .map(|_| format!("{}{}", ONSETS[rng.random_range(0..12)], VOWELS[rng.random_range(0..5)]))
        .collect()
}

impl SyntheticEnv {
    pub fn new(cfg: &SyntheticConfig, run_seed: u64) -> Result<Self> {
        cfg.validate()?;
        let seed = cfg.seed.unwrap_or(run_seed);
        let mut rng = seeded_rng(seed, "synthetic/lexicon");
        let lexicon = (0..cfg.rule_tokens.len())
            .map(|_| (0..12).map(|_| pseudo_word(&mut rng)).collect())
            .collect();
        Ok(Self {
            rule_tokens: cfg.rule_tokens.clone(),
            p_hit: cfg.p_hit,
            p_miss: cfg.p_miss,
            seed,
            train_size: cfg.train_size,
            test_size: cfg.test_size,
            lexicon,
        })
    }

    pub fn categories(&self) -> usize {
        self.rule_tokens.len()
    }

    /// `n` examples cycling through categories, ids `{split}-{i}`.
    pub fn generate_examples(&self, split: &str, n: usize) -> Vec<Example> {
        let mut rng = seeded_rng(self.seed, &format!("synthetic/data/{split}"));
        (0..n)
            .map(|i| {
                let category = i % self.categories();
                let words = &self.lexicon[category];
                let body: Vec<&str> = (0..6).map(|_| words[rng.random_range(0..words.len())].as_str()).collect();
                Example::new(
                    format!("{split}-{i}"),
                    format!("Classify the record: {} (item {i})", body.join(" ")),
                    format!("correct:{category}"),
                )
                .with_meta(CATEGORY_KEY, category.to_string())
            })
            .collect()
    }

    pub fn train_split(&self) -> Vec<Example> {
        self.generate_examples("train", self.train_size)
    }

    pub fn test_split(&self) -> Vec<Example> {
        self.generate_examples("test", self.test_size)
    }

    pub fn category_of(&self, example: &Example) -> Result<usize> {
        example
            .metadata
            .get(CATEGORY_KEY)
            .and_then(|c| c.parse::<usize>().ok())
            .filter(|c| *c < self.categories())
            .ok_or_else(|| Error::invalid(format!("example {} has no valid synthetic category", example.id)))
    }

    pub fn has_token(&self, prompt: &str, category: usize) -> bool {
        prompt.contains(self.rule_tokens[category].as_str())
    }

    /// Probability that `prompt` answers an example of `category` correctly.
    pub fn accuracy_for(&self, prompt: &str, category: usize) -> f64 {
        if self.has_token(prompt, category) {
            self.p_hit
        } else {
            self.p_miss
        }
    }

    pub fn is_correct(&self, prompt: &str, example: &Example) -> Result<bool> {
        let category = self.category_of(example)?;
        let u = keyed_unit(self.seed, &["synthetic/grade", &example.id]);
        Ok(u < self.accuracy_for(prompt, category))
    }

    /// Parses the rule token out of a gradient this env produced.
    pub fn token_in_gradient<'a>(&self, gradient: &'a str) -> Option<&'a str> {
        let start = gradient.find('\'')? + 1;
        let len = gradient[start..].find('\'')?;
        Some(&gradient[start..start + len])
    }

    pub fn gradient_for(&self, category: usize) -> String {
        format!(
            "Add the instruction token '{}' so inputs of category {category} are handled.",
            self.rule_tokens[category]
        )
    }
}

impl TaskModel for SyntheticEnv {
    fn generate(&self, prompt: &str, example: &Example) -> Result<String> {
        let category = self.category_of(example)?;
        Ok(if self.is_correct(prompt, example)? {
            format!("correct:{category}")
        } else {
            format!("wrong:{category}")
        })
    }
}

/// Scripted optimizer driven by [`SyntheticEnv`].
#[derive(Debug, Clone)]
pub struct SyntheticOptimizer {
    env: Arc<SyntheticEnv>,
}

impl SyntheticOptimizer {
    pub fn new(env: Arc<SyntheticEnv>) -> Self {
        Self { env }
    }
}

impl OptimizerModel for SyntheticOptimizer {
    fn gradients(&self, _prompt: &str, sample: &ContrastSample) -> Result<Vec<String>> {
        let mut categories = Vec::new();
        for failure in sample.failures() {
            let c = self.env.category_of(&failure.example)?;
            if !categories.contains(&c) {
                categories.push(c);
            }
        }
        categories.sort_unstable();
        Ok(categories.into_iter().map(|c| self.env.gradient_for(c)).collect())
    }

    fn rewrite(&self, prompt: &str, gradient: &str) -> Result<Vec<String>> {
        let mut out = Vec::new();
        if let Some(token) = self.env.token_in_gradient(gradient) {
            out.push(format!("{prompt} {token}"));
        }
        // toggles a token-free sentence so the score is unchanged
        out.push(match prompt.find(PARAPHRASE) {
            Some(at) => format!("{}{}", &prompt[..at], &prompt[at + PARAPHRASE.len()..]),
            None => format!("{prompt}{PARAPHRASE}"),
        });
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::GradedInstance;
    use crate::types::Prediction;

    fn env(p_hit: f64) -> SyntheticEnv {
        SyntheticEnv::new(
            &SyntheticConfig {
                p_hit,
                ..SyntheticConfig::default()
            },
            7,
        )
        .unwrap()
    }

    fn failing(example: Example) -> GradedInstance {
        GradedInstance {
            prediction: Prediction {
                example_id: example.id.clone(),
                raw_output: "wrong".into(),
                extracted_answer: "wrong".into(),
                correct: false,
                score: 0.0,
            },
            example,
        }
    }

    #[test]
    fn all_tokens_with_certain_hit_is_always_right() {
        let e = env(1.0);
        let prompt = format!("base {}", e.rule_tokens.join(" "));
        for ex in e.generate_examples("x", 200) {
            assert_eq!(e.generate(&prompt, &ex).unwrap(), format!("correct:{}", e.category_of(&ex).unwrap()));
        }
    }

    #[test]
    fn repeat_calls_agree() {
        let e = env(0.95);
        let ex = &e.generate_examples("x", 3)[2];
        assert_eq!(e.generate("p T1", ex).unwrap(), e.generate("p T1", ex).unwrap());
    }

    #[test]
    fn hit_rate_matches_probability() {
        let e = env(0.95);
        let examples: Vec<Example> = (0..1000)
            .map(|i| Example::new(format!("c0-{i}"), "q", "correct:0").with_meta(CATEGORY_KEY, "0"))
            .collect();
        let hits = examples.iter().filter(|ex| e.is_correct("prompt T0", ex).unwrap()).count();
        let acc = hits as f64 / 1000.0;
        assert!((0.93..=0.97).contains(&acc), "accuracy {acc}");
    }

    #[test]
    fn same_token_subset_same_outcome() {
        let e = env(0.95);
        for ex in e.generate_examples("x", 100) {
            assert_eq!(
                e.is_correct("alpha T2 T0", &ex).unwrap(),
                e.is_correct("T0 beta gamma T2", &ex).unwrap()
            );
        }
    }

    #[test]
    fn gradients_name_failing_categories() {
        let e = Arc::new(env(0.95));
        let opt = SyntheticOptimizer::new(e.clone());
        let cat2: Vec<Example> = e.generate_examples("x", 20).into_iter().filter(|x| x.metadata[CATEGORY_KEY] == "2").collect();
        let sample = ContrastSample {
            hard_negatives: vec![failing(cat2[0].clone())],
            boundary_pairs: vec![(failing(cat2[1].clone()), failing(cat2[2].clone()))],
            anchors: vec![],
        };
        let g = opt.gradients("p", &sample).unwrap();
        assert_eq!(g.len(), 1);
        assert!(g[0].contains("'T2'"));
        assert_eq!(e.token_in_gradient(&g[0]), Some("T2"));
    }

    #[test]
    fn rewrite_appends_token_and_toggles_paraphrase() {
        let e = Arc::new(env(0.95));
        let opt = SyntheticOptimizer::new(e.clone());
        let out = opt.rewrite("Base.", &e.gradient_for(3)).unwrap();
        assert_eq!(out.len(), 2);
        assert!(out[0].ends_with(" T3"));
        assert_eq!(out[1], "Base. Think step by step.");
        assert_eq!(opt.rewrite(&out[1], "no token here").unwrap(), ["Base."]);
    }

    #[test]
    fn config_validation() {
        let bad = SyntheticConfig {
            p_hit: 0.3,
            p_miss: 0.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = SyntheticConfig {
            rule_tokens: vec![],
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}

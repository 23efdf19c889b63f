//! Dataset loading, answer extraction and scoring.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Example, Prediction};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetFormat {
    #[default]
    Jsonl,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerMode {
    #[default]
    ExactMatch,
    NumericMatch,
    BinaryLabel,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractionMode {
    #[default]
    LastLine,
    Tag,
    Regex,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum F1Average {
    #[default]
    Binary,
    Macro,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    /// Training split.
    pub path: PathBuf,
    /// Test split used by `evaluate` and for final reporting.
    #[serde(default)]
    pub test_path: Option<PathBuf>,
    #[serde(default)]
    pub format: DatasetFormat,
    #[serde(default)]
    pub answer_mode: AnswerMode,
    #[serde(default)]
    pub positive_label: Option<String>,
    #[serde(default)]
    pub extraction: ExtractionMode,
    /// Tag name for `tag` extraction (default `answer`), regex for `regex`.
    #[serde(default)]
    pub pattern: Option<String>,
    #[serde(default)]
    pub f1_average: F1Average,
}

impl DatasetSpec {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self {
            path: path.into(),
            test_path: None,
            format: DatasetFormat::Jsonl,
            answer_mode: AnswerMode::ExactMatch,
            positive_label: None,
            extraction: ExtractionMode::LastLine,
            pattern: None,
            f1_average: F1Average::Binary,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.answer_mode == AnswerMode::BinaryLabel && self.positive_label.is_none() {
            return Err(Error::Config("binary_label mode requires positive_label".into()));
        }
        match self.extraction {
            ExtractionMode::Regex => {
                let pattern = self
                    .pattern
                    .as_deref()
                    .ok_or_else(|| Error::Config("regex extraction requires pattern".into()))?;
                Regex::new(pattern).map_err(|e| Error::Config(format!("bad pattern: {e}")))?;
            }
            ExtractionMode::Tag => {
                if let Some(tag) = &self.pattern {
                    if tag.is_empty() || tag.contains(['<', '>']) {
                        return Err(Error::Config(format!("bad tag name `{tag}`")));
                    }
                }
            }
            ExtractionMode::LastLine => {}
        }
        Ok(())
    }
}

#[derive(Deserialize)]
struct Record {
    #[serde(default)]
    id: Option<serde_json::Value>,
    query: String,
    answer: serde_json::Value,
    #[serde(default)]
    metadata: BTreeMap<String, serde_json::Value>,
}

fn scalar_to_string(v: serde_json::Value) -> Option<String> {
    match v {
        serde_json::Value::String(s) => Some(s),
        serde_json::Value::Number(n) => Some(n.to_string()),
        serde_json::Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

/// Parses JSONL text. Line numbers in errors are 1-based; missing ids become the
/// 0-based record index.
pub fn parse_jsonl(text: &str, path: &Path) -> Result<Vec<Example>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    let line_err = |line: usize, message: String| Error::DatasetLine {
        path: path.to_path_buf(),
        line,
        message,
    };
    for (n, line) in text.lines().enumerate() {
        let lineno = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(line).map_err(|e| line_err(lineno, e.to_string()))?;
        if rec.query.trim().is_empty() {
            return Err(line_err(lineno, "empty query".into()));
        }
        let id = match rec.id {
            Some(v) => scalar_to_string(v).ok_or_else(|| line_err(lineno, "id must be a scalar".into()))?,
            None => out.len().to_string(),
        };
        let answer = scalar_to_string(rec.answer)
            .ok_or_else(|| line_err(lineno, "answer must be a scalar".into()))?;
        let mut metadata = BTreeMap::new();
        for (k, v) in rec.metadata {
            let v = match v {
                serde_json::Value::String(s) => s,
                other => other.to_string(),
            };
            metadata.insert(k, v);
        }
        if !seen.insert(id.clone()) {
            return Err(line_err(lineno, format!("duplicate id `{id}`")));
        }
        out.push(Example {
            id,
            query: rec.query,
            answer,
            metadata,
        });
    }
    Ok(out)
}

pub fn load_dataset(spec: &DatasetSpec) -> Result<Vec<Example>> {
    load_jsonl(&spec.path)
}

pub fn load_jsonl(path: &Path) -> Result<Vec<Example>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Dataset {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    parse_jsonl(&text, path)
}

/// Trim, lowercase, collapse whitespace, drop one trailing period.
pub fn normalize(text: &str) -> String {
    let folded = text.trim().to_lowercase();
    let collapsed = folded.split_whitespace().collect::<Vec<_>>().join(" ");
    match collapsed.strip_suffix('.') {
        Some(rest) => rest.trim_end().to_string(),
        None => collapsed,
    }
}

fn tag_regex(tag: &str) -> Regex {
    let t = regex::escape(tag);
    Regex::new(&format!(r"(?s)<{t}>(.*?)</{t}>")).expect("escaped tag regex")
}

/// Pulls the answer text out of a raw generation, then normalizes it.
///
/// Never fails: a missing tag or regex match yields an empty string.
pub fn extract_answer(raw: &str, spec: &DatasetSpec) -> String {
    let picked = match spec.extraction {
        ExtractionMode::LastLine => raw
            .lines()
            .rev()
            .find(|l| !l.trim().is_empty())
            .unwrap_or("")
            .to_string(),
        ExtractionMode::Tag => {
            let re = tag_regex(spec.pattern.as_deref().unwrap_or("answer"));
            re.captures_iter(raw)
                .last()
                .map(|c| c[1].to_string())
                .unwrap_or_default()
        }
        ExtractionMode::Regex => match spec.pattern.as_deref().and_then(|p| Regex::new(p).ok()) {
            Some(re) => re
                .captures_iter(raw)
                .last()
                .map(|c| c.get(1).or_else(|| c.get(0)).map_or("", |m| m.as_str()).to_string())
                .unwrap_or_default(),
            None => String::new(),
        },
    };
    normalize(&picked)
}

pub fn score_em(extracted: &str, gold: &str) -> f64 {
    let e = normalize(extracted);
    if !e.is_empty() && e == normalize(gold) {
        1.0
    } else {
        0.0
    }
}

fn number_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[-+]?\$?\d[\d,]*(?:\.\d+)?%?|[-+]?\$?\.\d+%?").expect("number regex"))
}

/// Canonical decimal form of the last number in `text`: sign, integer digits
/// without leading zeros, fraction without trailing zeros.
pub fn canonical_number(text: &str) -> Option<String> {
    let token = number_regex().find_iter(text).last()?.as_str();
    let negative = token.starts_with('-');
    let digits: String = token
        .chars()
        .filter(|c| c.is_ascii_digit() || *c == '.')
        .collect();
    let (int, frac) = digits.split_once('.').unwrap_or((&digits, ""));
    let int = int.trim_start_matches('0');
    let frac = frac.trim_end_matches('0');
    let int = if int.is_empty() { "0" } else { int };
    let zero = int == "0" && frac.is_empty();
    let sign = if negative && !zero { "-" } else { "" };
    Some(if frac.is_empty() {
        format!("{sign}{int}")
    } else {
        format!("{sign}{int}.{frac}")
    })
}

/// Compares the last numeric token of each side exactly.
pub fn score_numeric(extracted: &str, gold: &str) -> f64 {
    match (canonical_number(extracted), canonical_number(gold)) {
        (Some(a), Some(b)) if a == b => 1.0,
        _ => 0.0,
    }
}

/// Positive-class F1. Undefined precision or recall counts as 0.
pub fn f1_binary(predictions: &[String], golds: &[String], positive: &str) -> Result<f64> {
    if predictions.len() != golds.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} gold labels",
            predictions.len(),
            golds.len()
        )));
    }
    let pos = normalize(positive);
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (p, g) in predictions.iter().zip(golds) {
        let p = normalize(p) == pos;
        let g = normalize(g) == pos;
        match (p, g) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => {}
        }
    }
    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fneg == 0 { 0.0 } else { tp as f64 / (tp + fneg) as f64 };
    Ok(if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    })
}

/// Unweighted mean of per-label F1 over every label seen in the golds.
pub fn f1_macro(predictions: &[String], golds: &[String]) -> Result<f64> {
    let mut labels: Vec<String> = golds.iter().map(|g| normalize(g)).collect();
    labels.sort();
    labels.dedup();
    if labels.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for label in &labels {
        total += f1_binary(predictions, golds, label)?;
    }
    Ok(total / labels.len() as f64)
}

/// Grades raw task-model outputs according to a [`DatasetSpec`].
#[derive(Debug, Clone)]
pub struct Scorer {
    spec: DatasetSpec,
}

impl Scorer {
    pub fn new(spec: DatasetSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self { spec })
    }

    pub fn spec(&self) -> &DatasetSpec {
        &self.spec
    }

    pub fn grade(&self, example: &Example, raw_output: String) -> Prediction {
        let extracted = extract_answer(&raw_output, &self.spec);
        let score = match self.spec.answer_mode {
            AnswerMode::ExactMatch | AnswerMode::BinaryLabel => score_em(&extracted, &example.answer),
            AnswerMode::NumericMatch => score_numeric(&extracted, &example.answer),
        };
        Prediction {
            example_id: example.id.clone(),
            raw_output,
            extracted_answer: extracted,
            correct: score == 1.0,
            score,
        }
    }

    /// Dataset-level metric: F1 for label tasks, mean item score otherwise.
    pub fn metric(&self, examples: &[Example], predictions: &[Prediction]) -> Result<f64> {
        if examples.len() != predictions.len() {
            return Err(Error::invalid("metric needs one prediction per example"));
        }
        if examples.is_empty() {
            return Ok(0.0);
        }
        match self.spec.answer_mode {
            AnswerMode::BinaryLabel => {
                let preds: Vec<String> = predictions.iter().map(|p| p.extracted_answer.clone()).collect();
                let golds: Vec<String> = examples.iter().map(|e| e.answer.clone()).collect();
                match self.spec.f1_average {
                    F1Average::Binary => {
                        f1_binary(&preds, &golds, self.spec.positive_label.as_deref().unwrap_or_default())
                    }
                    F1Average::Macro => f1_macro(&preds, &golds),
                }
            }
            _ => Ok(mean_score(predictions)),
        }
    }
}

pub fn mean_score(predictions: &[Prediction]) -> f64 {
    if predictions.is_empty() {
        return 0.0;
    }
    predictions.iter().map(|p| p.score).sum::<f64>() / predictions.len() as f64
}

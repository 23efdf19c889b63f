//! Meta-prompt templates with `{name}` placeholders.

use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;

use crate::error::{Error, Result};

pub const GRADIENT_TEMPLATE: &str = include_str!("../../templates/gradient.txt");
pub const CANDIDATE_TEMPLATE: &str = include_str!("../../templates/candidate.txt");

pub const GRADIENT_PLACEHOLDERS: [&str; 4] = ["prompt", "boundary_pairs", "hard_negatives", "anchors"];
pub const CANDIDATE_PLACEHOLDERS: [&str; 2] = ["prompt", "new_constraint"];

fn placeholder_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{([a-z_]+)\}").expect("placeholder regex"))
}

/// Placeholder names used by `template`, in order of first appearance.
pub fn placeholders(template: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for cap in placeholder_regex().captures_iter(template) {
        let name = cap[1].to_string();
        if !out.contains(&name) {
            out.push(name);
        }
    }
    out
}

/// Substitutes every placeholder in one pass; values are not re-scanned.
///
/// Fails if the template names a placeholder that `values` lacks.
pub fn render(template: &str, values: &[(&str, &str)]) -> Result<String> {
    let mut out = String::with_capacity(template.len());
    let mut last = 0;
    for cap in placeholder_regex().captures_iter(template) {
        let whole = cap.get(0).expect("match");
        let name = &cap[1];
        let value = values
            .iter()
            .find(|(k, _)| *k == name)
            .map(|(_, v)| *v)
            .ok_or_else(|| Error::Config(format!("template placeholder {{{name}}} has no value")))?;
        out.push_str(&template[last..whole.start()]);
        out.push_str(value);
        last = whole.end();
    }
    out.push_str(&template[last..]);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Templates {
    pub gradient: String,
    pub candidate: String,
}

impl Default for Templates {
    fn default() -> Self {
        Self {
            gradient: GRADIENT_TEMPLATE.to_string(),
            candidate: CANDIDATE_TEMPLATE.to_string(),
        }
    }
}

impl Templates {
    pub fn load(gradient: Option<&Path>, candidate: Option<&Path>) -> Result<Self> {
        let read = |p: &Path| {
            std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read template {}: {e}", p.display())))
        };
        let t = Self {
            gradient: match gradient {
                Some(p) => read(p)?,
                None => GRADIENT_TEMPLATE.to_string(),
            },
            candidate: match candidate {
                Some(p) => read(p)?,
                None => CANDIDATE_TEMPLATE.to_string(),
            },
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        check(&self.gradient, &GRADIENT_PLACEHOLDERS, "gradient")?;
        check(&self.candidate, &CANDIDATE_PLACEHOLDERS, "candidate")
    }
}

fn check(template: &str, allowed: &[&str], which: &str) -> Result<()> {
    let used = placeholders(template);
    if let Some(bad) = used.iter().find(|u| !allowed.contains(&u.as_str())) {
        return Err(Error::Config(format!("{which} template uses unknown placeholder {{{bad}}}")));
    }
    if !used.iter().any(|u| u == "prompt") {
        return Err(Error::Config(format!("{which} template never mentions {{prompt}}")));
    }
    Ok(())
}

//! Momentum-guided semantic clustering of textual gradients.
//!
//! The pool keeps every gradient with a weight that decays geometrically with
//! age. Each iteration the pool is clustered and the heaviest gradients of every
//! cluster become the rewrite directions.

use std::cmp::Ordering;
use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::clustering::kmeans;
use crate::error::{Error, Result};
use crate::types::TextualGradient;

#[derive(Debug, Clone, PartialEq)]
pub struct GradientPool {
    pub entries: Vec<TextualGradient>,
    pub gamma: f64,
    pub cap: usize,
    pub min_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinedCluster {
    pub weight: f64,
    /// Heaviest members first.
    pub gradients: Vec<TextualGradient>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RefinedGradients {
    /// Heaviest cluster first.
    pub clusters: Vec<RefinedCluster>,
}

impl RefinedGradients {
    /// Interleaves clusters: first pick of every cluster, then second picks, ...
    pub fn round_robin(&self) -> Vec<&TextualGradient> {
        let depth = self.clusters.iter().map(|c| c.gradients.len()).max().unwrap_or(0);
        let mut out = Vec::new();
        for rank in 0..depth {
            for c in &self.clusters {
                if let Some(g) = c.gradients.get(rank) {
                    out.push(g);
                }
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.clusters.iter().map(|c| c.gradients.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Weight of a gradient born at `birth` when observed at `t`.
pub fn decayed_weight(initial: f64, gamma: f64, birth: u64, t: u64) -> f64 {
    let age = (t - birth) as i32;
    initial * gamma.powi(age)
}

/// Lower weight first; among equals the older entry, then the larger id, goes first.
fn eviction_order(a: &TextualGradient, b: &TextualGradient) -> Ordering {
    a.current_weight
        .total_cmp(&b.current_weight)
        .then(a.birth_iteration.cmp(&b.birth_iteration))
        .then_with(|| b.id.cmp(&a.id))
}

/// Ranking inside a cluster: heavier, then newer, then smaller id.
fn rank_order(a: &TextualGradient, b: &TextualGradient) -> Ordering {
    b.current_weight
        .total_cmp(&a.current_weight)
        .then(b.birth_iteration.cmp(&a.birth_iteration))
        .then_with(|| a.id.cmp(&b.id))
}

impl GradientPool {
    pub fn new(gamma: f64, cap: usize, min_weight: f64) -> Self {
        Self {
            entries: Vec::new(),
            gamma,
            cap,
            min_weight,
        }
    }

    pub fn with_entries(mut self, entries: Vec<TextualGradient>) -> Self {
        self.entries = entries;
        self
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Recomputes every weight for iteration `t` from its initial weight and age.
    pub fn decay(&mut self, t: u64) -> Result<()> {
        if let Some(g) = self.entries.iter().find(|g| g.birth_iteration > t) {
            return Err(Error::invalid(format!(
                "gradient {} born at {} cannot be decayed to {t}",
                g.id, g.birth_iteration
            )));
        }
        let gamma = self.gamma;
        for g in &mut self.entries {
            g.current_weight = decayed_weight(g.initial_weight, gamma, g.birth_iteration, t);
        }
        Ok(())
    }

    /// Decays the pool to `t`, adds `new`, then prunes.
    pub fn admit(&mut self, new: Vec<TextualGradient>, t: u64) -> Result<()> {
        let mut ids: HashSet<&str> = self.entries.iter().map(|g| g.id.as_str()).collect();
        for g in &new {
            if g.birth_iteration != t {
                return Err(Error::invalid(format!(
                    "new gradient {} has birth {} at iteration {t}",
                    g.id, g.birth_iteration
                )));
            }
            if g.text.trim().is_empty() {
                return Err(Error::invalid(format!("gradient {} has empty text", g.id)));
            }
            if !ids.insert(g.id.as_str()) {
                return Err(Error::DuplicateId(g.id.clone()));
            }
        }
        self.decay(t)?;
        for mut g in new {
            g.current_weight = g.initial_weight;
            self.entries.push(g);
        }
        self.prune();
        Ok(())
    }

    fn prune(&mut self) {
        let min = self.min_weight;
        self.entries.retain(|g| g.current_weight >= min);
        if self.entries.len() > self.cap {
            let mut order: Vec<usize> = (0..self.entries.len()).collect();
            order.sort_by(|&a, &b| eviction_order(&self.entries[a], &self.entries[b]));
            let drop: HashSet<usize> = order[..self.entries.len() - self.cap].iter().copied().collect();
            let mut i = 0;
            self.entries.retain(|_| {
                let keep = !drop.contains(&i);
                i += 1;
                keep
            });
        }
    }

    /// Clusters the pool into at most `clusters` groups and keeps the `top_n`
    /// heaviest gradients of each.
    ///
    /// Clustering is unweighted; weights only order gradients and clusters.
    pub fn refine(&self, clusters: usize, top_n: usize, rng: &mut impl Rng) -> Result<RefinedGradients> {
        if self.entries.is_empty() {
            return Err(Error::invalid("cannot refine an empty gradient pool"));
        }
        if let Some(g) = self.entries.iter().find(|g| g.embedding.is_empty()) {
            return Err(Error::invalid(format!("gradient {} has no embedding", g.id)));
        }
        let points: Vec<Vec<f64>> = self.entries.iter().map(|g| g.embedding.clone()).collect();
        let result = kmeans(&points, clusters.min(points.len()), None, rng)?;

        let mut out: Vec<(usize, RefinedCluster)> = Vec::new();
        for (cid, members) in result.members().into_iter().enumerate() {
            if members.is_empty() {
                continue;
            }
            let mut group: Vec<&TextualGradient> = members.iter().map(|&i| &self.entries[i]).collect();
            let weight = group.iter().map(|g| g.current_weight).sum();
            group.sort_by(|a, b| rank_order(a, b));
            out.push((
                cid,
                RefinedCluster {
                    weight,
                    gradients: group.into_iter().take(top_n).cloned().collect(),
                },
            ));
        }
        out.sort_by(|a, b| b.1.weight.total_cmp(&a.1.weight).then(a.0.cmp(&b.0)));
        Ok(RefinedGradients {
            clusters: out.into_iter().map(|(_, c)| c).collect(),
        })
    }
}

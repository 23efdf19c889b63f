//! Boundary-aware contrastive sampling.
//!
//! A clustered batch is turned into a per-cluster sample of hard negatives,
//! anchors and boundary pairs, with sampling quotas proportional to each
//! cluster's error rate.

use serde::{Deserialize, Serialize};

use crate::clustering::{nearest_to_centroid, squared_distance, ClusterResult};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub cluster_id: usize,
    pub member_ids: Vec<String>,
    #[serde(skip)]
    pub centroid: Vec<f64>,
    pub error_rate: f64,
    pub quota: usize,
}

/// Positions (into the batch) of the instances chosen for one cluster.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripartiteSample {
    pub hard_negatives: Vec<usize>,
    pub anchors: Vec<usize>,
    /// `(positive, negative)`
    pub boundary_pairs: Vec<(usize, usize)>,
}

impl TripartiteSample {
    pub fn budget_used(&self) -> usize {
        self.hard_negatives.len() + self.anchors.len() + 2 * self.boundary_pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.budget_used() == 0
    }

    /// Whether the sample shows the optimizer any failure at all.
    pub fn has_failures(&self) -> bool {
        !self.hard_negatives.is_empty() || !self.boundary_pairs.is_empty()
    }
}

/// A clustered instance as seen by the sampler.
#[derive(Debug, Clone, Copy)]
pub struct Member<'a> {
    pub index: usize,
    pub embedding: &'a [f64],
    pub correct: bool,
}

/// Fraction of incorrect members per cluster. Empty clusters report 0.
pub fn error_rates(clusters: &ClusterResult, correct: &[bool]) -> Result<Vec<f64>> {
    if correct.len() != clusters.assignments.len() {
        return Err(Error::invalid(format!(
            "{} correctness flags for {} points",
            correct.len(),
            clusters.assignments.len()
        )));
    }
    let mut wrong = vec![0usize; clusters.k()];
    let mut size = vec![0usize; clusters.k()];
    for (&c, &ok) in clusters.assignments.iter().zip(correct) {
        size[c] += 1;
        if !ok {
            wrong[c] += 1;
        }
    }
    Ok(wrong
        .iter()
        .zip(&size)
        .map(|(&w, &n)| if n == 0 { 0.0 } else { w as f64 / n as f64 })
        .collect())
}

/// Ceiling that ignores float noise just above an integer.
fn ceil_snapped(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r
    } else {
        x.ceil()
    }
}

/// `Q_k = max(1, ceil(Q_total * E_k / sum E))`, or 1 everywhere when no
/// cluster has errors. The total may exceed `total`.
pub fn allocate_quotas(error_rates: &[f64], total: usize) -> Result<Vec<usize>> {
    if total == 0 {
        return Err(Error::invalid("total quota must be >= 1"));
    }
    if let Some(bad) = error_rates.iter().find(|e| !e.is_finite() || **e < 0.0) {
        return Err(Error::invalid(format!("invalid error rate {bad}")));
    }
    let sum: f64 = error_rates.iter().sum();
    if sum == 0.0 {
        return Ok(vec![1; error_rates.len()]);
    }
    Ok(error_rates
        .iter()
        .map(|e| (ceil_snapped(total as f64 * e / sum) as usize).max(1))
        .collect())
}

/// Greedy minimum-distance pairing without endpoint reuse.
///
/// Indices in the output are positions within `positives` / `negatives`. Ties
/// go to the smallest `(positive, negative)` position.
pub fn mine_boundary_pairs(
    positives: &[&[f64]],
    negatives: &[&[f64]],
    max_pairs: usize,
) -> Vec<(usize, usize)> {
    let mut used_pos = vec![false; positives.len()];
    let mut used_neg = vec![false; negatives.len()];
    let mut out = Vec::new();
    while out.len() < max_pairs {
        let mut best: Option<(f64, usize, usize)> = None;
        for (i, p) in positives.iter().enumerate() {
            if used_pos[i] {
                continue;
            }
            for (j, n) in negatives.iter().enumerate() {
                if used_neg[j] {
                    continue;
                }
                let d = squared_distance(p, n);
                if best.is_none_or(|(bd, _, _)| d < bd) {
                    best = Some((d, i, j));
                }
            }
        }
        let Some((_, i, j)) = best else { break };
        used_pos[i] = true;
        used_neg[j] = true;
        out.push((i, j));
    }
    out
}

/// Picks hard negatives, anchors and boundary pairs for one cluster.
///
/// Budget order: one hard negative, one anchor, then boundary pairs at two
/// units each. A cluster without positives yields only hard negatives, nearest
/// to the centroid first.
pub fn select_tripartite(
    members: &[Member<'_>],
    centroid: &[f64],
    quota: usize,
) -> Result<TripartiteSample> {
    if members.is_empty() {
        return Err(Error::invalid("cannot sample an empty cluster"));
    }
    if quota == 0 {
        return Err(Error::invalid("quota must be >= 1"));
    }
    let positives: Vec<&Member> = members.iter().filter(|m| m.correct).collect();
    let negatives: Vec<&Member> = members.iter().filter(|m| !m.correct).collect();
    let mut sample = TripartiteSample::default();

    if positives.is_empty() {
        let mut ranked: Vec<(f64, usize)> = negatives
            .iter()
            .map(|m| (squared_distance(m.embedding, centroid), m.index))
            .collect();
        ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        sample.hard_negatives = ranked.into_iter().take(quota).map(|(_, i)| i).collect();
        return Ok(sample);
    }

    let mut budget = quota;
    if !negatives.is_empty() {
        let view: Vec<(usize, &[f64])> = negatives.iter().map(|m| (m.index, m.embedding)).collect();
        sample.hard_negatives.push(nearest_to_centroid(&view, centroid)?);
        budget -= 1;
    }
    if budget > 0 {
        let view: Vec<(usize, &[f64])> = positives.iter().map(|m| (m.index, m.embedding)).collect();
        sample.anchors.push(nearest_to_centroid(&view, centroid)?);
        budget -= 1;
    }
    if !negatives.is_empty() && budget >= 2 {
        let pos: Vec<&[f64]> = positives.iter().map(|m| m.embedding).collect();
        let neg: Vec<&[f64]> = negatives.iter().map(|m| m.embedding).collect();
        sample.boundary_pairs = mine_boundary_pairs(&pos, &neg, budget / 2)
            .into_iter()
            .map(|(i, j)| (positives[i].index, negatives[j].index))
            .collect();
    }
    Ok(sample)
}

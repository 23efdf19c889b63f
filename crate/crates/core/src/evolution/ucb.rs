//! Upper-confidence-bound selection over candidate prompts.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::types::{CandidateStats, Example};

/// `mu + alpha * sqrt(ln N / n)`, or `+inf` for an arm never pulled.
pub fn ucb_value(stats: &CandidateStats, total_pulls: u64, alpha: f64) -> Result<f64> {
    if alpha.is_nan() || alpha < 0.0 {
        return Err(Error::invalid(format!("ucb alpha must be >= 0, got {alpha}")));
    }
    if stats.pulls == 0 {
        return Ok(f64::INFINITY);
    }
    if total_pulls < stats.pulls {
        return Err(Error::invalid("total pulls below an arm's pull count"));
    }
    let bonus = ((total_pulls as f64).ln() / stats.pulls as f64).sqrt();
    Ok(stats.mean() + alpha * bonus)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UcbParams {
    /// Total examples to spend; each pull costs `minibatch`.
    pub budget: usize,
    pub minibatch: usize,
    pub beam_width: usize,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UcbOutcome {
    /// Top arms by empirical mean, best first.
    pub selected: Vec<CandidateStats>,
    /// Every arm with its final statistics, in input order.
    pub arms: Vec<CandidateStats>,
    /// Pulls made during this call.
    pub pulls: u64,
}

/// Walks one arm's private shuffled order of the eval pool.
struct Cursor {
    order: Vec<usize>,
    next: usize,
}

impl Cursor {
    fn draw(&mut self, n: usize, pool_len: usize, rng: &mut impl Rng) -> Vec<usize> {
        if self.order.is_empty() || self.next + n > self.order.len() {
            self.order = (0..pool_len).collect();
            self.order.shuffle(rng);
            self.next = 0;
        }
        let out = self.order[self.next..self.next + n].to_vec();
        self.next += n;
        out
    }
}

/// Spends `budget` on pulls chosen by UCB, then returns the best arms.
///
/// Each pull scores the chosen prompt on a fresh minibatch drawn without
/// replacement from that arm's own shuffle of `eval_pool`; `evaluate` returns the
/// mean score in `[0, 1]`. Ties in the UCB argmax go to the earliest arm. The
/// final ranking orders by mean, then by pull count, then by input order.
pub fn ucb_select<F>(
    arms: Vec<CandidateStats>,
    eval_pool: &[Example],
    params: UcbParams,
    rng: &mut impl Rng,
    mut evaluate: F,
) -> Result<UcbOutcome>
where
    F: FnMut(&str, &[Example]) -> Result<f64>,
{
    if arms.is_empty() {
        return Err(Error::invalid("ucb_select needs at least one candidate"));
    }
    if params.alpha.is_nan() || params.alpha < 0.0 {
        return Err(Error::invalid("ucb alpha must be >= 0"));
    }
    if params.budget > 0 && (params.minibatch == 0 || params.minibatch > eval_pool.len()) {
        return Err(Error::invalid(format!(
            "minibatch {} does not fit an eval pool of {}",
            params.minibatch,
            eval_pool.len()
        )));
    }
    let mut arms = arms;
    let mut cursors: Vec<Cursor> = arms.iter().map(|_| Cursor { order: Vec::new(), next: 0 }).collect();
    let mut total: u64 = arms.iter().map(|a| a.pulls).sum();
    let mut spent = 0usize;
    let mut pulls = 0u64;

    while spent < params.budget {
        let mut best = 0;
        let mut best_value = f64::NEG_INFINITY;
        for (i, arm) in arms.iter().enumerate() {
            let v = ucb_value(arm, total, params.alpha)?;
            if v > best_value {
                best = i;
                best_value = v;
            }
        }
        let batch: Vec<Example> = cursors[best]
            .draw(params.minibatch, eval_pool.len(), rng)
            .into_iter()
            .map(|i| eval_pool[i].clone())
            .collect();
        let score = evaluate(&arms[best].prompt_text, &batch)?;
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::invalid(format!("evaluation returned score {score} outside [0, 1]")));
        }
        arms[best].pulls += 1;
        arms[best].score_sum += score;
        total += 1;
        pulls += 1;
        spent += params.minibatch;
    }

    let mut order: Vec<usize> = (0..arms.len()).collect();
    order.sort_by(|&a, &b| {
        arms[b]
            .mean()
            .total_cmp(&arms[a].mean())
            .then(arms[b].pulls.cmp(&arms[a].pulls))
            .then(a.cmp(&b))
    });
    let selected = order
        .into_iter()
        .take(params.beam_width)
        .map(|i| arms[i].clone())
        .collect();
    Ok(UcbOutcome { selected, arms, pulls })
}

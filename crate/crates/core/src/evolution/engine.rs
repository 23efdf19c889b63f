use std::collections::HashSet;
use std::sync::Arc;

use rand::seq::index;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use tracing::{debug, info, warn};

use super::trace::{prompt_digest, BeamSnapshot, IterationSummary, IterationTrace, OptimizeReport};
use super::ucb::{ucb_select, UcbParams};
use crate::backends::{self, Backends, ContrastSample, GradedInstance};
use crate::bacs::{allocate_quotas, error_rates, select_tripartite, ClusterReport, Member, TripartiteSample};
use crate::clustering::kmeans;
use crate::config::{ProjectConfig, RunConfig};
use crate::embedding::{build_encoder, instance_text, Encoder};
use crate::error::{Error, Result};
use crate::evaluation::{load_jsonl, mean_score, DatasetSpec, Scorer};
use crate::mgsc::GradientPool;
use crate::rng::{iteration_rng, seeded_rng};
use crate::types::{BeamEntry, CandidateStats, Example, Prediction, RunState, TextualGradient};
use crate::backends::RetryPolicy;

pub struct IterationOutput {
    pub state: RunState,
    pub trace: IterationTrace,
}

/// Everything a run needs besides its mutable [`RunState`].
pub struct Engine {
    config: RunConfig,
    backends: Backends,
    encoder: Arc<dyn Encoder>,
    scorer: Scorer,
    /// Examples batches are drawn from.
    batch_pool: Vec<Example>,
    /// Held-out slice of the training split used for candidate selection.
    eval_pool: Vec<Example>,
    test_set: Vec<Example>,
    threads: rayon::ThreadPool,
}

impl Engine {
    pub fn new(
        config: RunConfig,
        backends: Backends,
        encoder: Arc<dyn Encoder>,
        scorer: Scorer,
        train: Vec<Example>,
        test_set: Vec<Example>,
    ) -> Result<Self> {
        config.validate()?;
        if train.len() < 2 {
            return Err(Error::Config(format!(
                "training split needs at least 2 examples, found {}",
                train.len()
            )));
        }
        let n = train.len();
        let held = ((n as f64 * config.eval_fraction).ceil() as usize).clamp(1, n - 1);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut seeded_rng(config.seed, "split"));
        let mut eval_idx = order[..held].to_vec();
        let mut batch_idx = order[held..].to_vec();
        eval_idx.sort_unstable();
        batch_idx.sort_unstable();
        let eval_pool = eval_idx.iter().map(|&i| train[i].clone()).collect();
        let batch_pool = batch_idx.iter().map(|&i| train[i].clone()).collect();
        let threads = rayon::ThreadPoolBuilder::new()
            .num_threads(config.parallelism)
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
        Ok(Self {
            config,
            backends,
            encoder,
            scorer,
            batch_pool,
            eval_pool,
            test_set,
            threads,
        })
    }

    /// Builds backends, encoder and data from a parsed config file.
    pub fn from_project(cfg: &ProjectConfig) -> Result<Self> {
        let backends = Backends::build(&cfg.backend, &cfg.run)?;
        let encoder: Arc<dyn Encoder> =
            Arc::from(build_encoder(&cfg.encoder, RetryPolicy::new(cfg.run.retries))?);
        let (spec, train, test) = match (&cfg.dataset, &backends.synthetic) {
            (Some(spec), _) => {
                let train = load_jsonl(&spec.path)?;
                let test = match &spec.test_path {
                    Some(p) => {
                        let test = load_jsonl(p)?;
                        if test.is_empty() {
                            return Err(Error::Dataset {
                                path: p.clone(),
                                message: "dataset is empty".into(),
                            });
                        }
                        test
                    }
                    None => Vec::new(),
                };
                (spec.clone(), train, test)
            }
            (None, Some(env)) => (DatasetSpec::new("<synthetic>"), env.train_split(), env.test_split()),
            (None, None) => return Err(Error::Config("no dataset configured".into())),
        };
        if train.is_empty() {
            return Err(Error::Dataset {
                path: spec.path.clone(),
                message: "dataset is empty".into(),
            });
        }
        Self::new(cfg.run.clone(), backends, encoder, Scorer::new(spec)?, train, test)
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn scorer(&self) -> &Scorer {
        &self.scorer
    }

    pub fn eval_pool(&self) -> &[Example] {
        &self.eval_pool
    }

    pub fn batch_pool(&self) -> &[Example] {
        &self.batch_pool
    }

    pub fn test_set(&self) -> &[Example] {
        &self.test_set
    }

    /// Predictions for `examples` in the given order, computed concurrently.
    pub fn predict_all(&self, prompt: &str, examples: &[Example]) -> Result<Vec<Prediction>> {
        let task = self.backends.task.as_ref();
        self.threads.install(|| {
            examples
                .par_iter()
                .map(|ex| backends::predict(task, &self.scorer, prompt, ex))
                .collect()
        })
    }

    /// Dataset metric of `prompt` on `examples` (F1 for label tasks).
    pub fn metric(&self, prompt: &str, examples: &[Example]) -> Result<f64> {
        let preds = self.predict_all(prompt, examples)?;
        self.scorer.metric(examples, &preds)
    }

    pub fn heldout_score(&self, prompt: &str) -> Result<f64> {
        self.metric(prompt, &self.eval_pool)
    }

    pub fn test_score(&self, prompt: &str) -> Result<Option<f64>> {
        if self.test_set.is_empty() {
            return Ok(None);
        }
        self.metric(prompt, &self.test_set).map(Some)
    }

    /// Fresh state with the configured initial prompt, scored on the held-out slice.
    pub fn initial_state(&self) -> Result<RunState> {
        let prompt = self.config.initial_prompt().to_string();
        let mut state = RunState::new(self.config.seed, prompt.clone());
        state.best_score = self.heldout_score(&prompt)?;
        Ok(state)
    }

    fn sample_batch(&self, t: u64) -> Vec<Example> {
        let mut rng = iteration_rng(self.config.seed, "batch", t);
        let n = self.config.batch_size.min(self.batch_pool.len());
        let mut batch: Vec<Example> = index::sample(&mut rng, self.batch_pool.len(), n)
            .into_iter()
            .map(|i| self.batch_pool[i].clone())
            .collect();
        batch.sort_by(|a, b| a.id.cmp(&b.id));
        batch
    }

    /// One pass of predict, sample, critique, refine, rewrite and select.
    ///
    /// `state` is left untouched; on error the caller still holds the last good
    /// state.
    pub fn run_iteration(&self, state: &RunState) -> Result<IterationOutput> {
        let cfg = &self.config;
        let t = state.iteration;
        let seed = state.rng.seed;
        let leader = state
            .leader()
            .ok_or_else(|| Error::invalid("run state has an empty beam"))?
            .prompt_text
            .clone();

        let batch = self.sample_batch(t);
        let preds = self.predict_all(&leader, &batch)?;
        let batch_accuracy = mean_score(&preds);

        let texts: Vec<String> = batch.iter().zip(&preds).map(|(e, p)| instance_text(e, p)).collect();
        let embeddings = self.encoder.embed_batch(&texts)?;
        let clusters = kmeans(
            &embeddings,
            cfg.instance_clusters,
            None,
            &mut iteration_rng(seed, "kmeans-instances", t),
        )?;
        let correct: Vec<bool> = preds.iter().map(|p| p.correct).collect();
        let rates = error_rates(&clusters, &correct)?;
        let quotas = allocate_quotas(&rates, cfg.total_quota)?;

        let mut reports = Vec::new();
        let mut samples: Vec<(usize, TripartiteSample)> = Vec::new();
        for (k, members) in clusters.members().into_iter().enumerate() {
            if members.is_empty() {
                continue;
            }
            let view: Vec<Member> = members
                .iter()
                .map(|&i| Member {
                    index: i,
                    embedding: &embeddings[i],
                    correct: correct[i],
                })
                .collect();
            samples.push((k, select_tripartite(&view, &clusters.centroids[k], quotas[k])?));
            reports.push(ClusterReport {
                cluster_id: k,
                member_ids: members.iter().map(|&i| batch[i].id.clone()).collect(),
                centroid: clusters.centroids[k].clone(),
                error_rate: rates[k],
                quota: quotas[k],
            });
        }

        let graded = |i: usize| GradedInstance {
            example: batch[i].clone(),
            prediction: preds[i].clone(),
        };
        let mut fresh: Vec<TextualGradient> = Vec::new();
        for (k, sample) in &samples {
            if !sample.has_failures() {
                continue;
            }
            let contrast = ContrastSample {
                boundary_pairs: sample.boundary_pairs.iter().map(|&(p, n)| (graded(p), graded(n))).collect(),
                hard_negatives: sample.hard_negatives.iter().map(|&i| graded(i)).collect(),
                anchors: sample.anchors.iter().map(|&i| graded(i)).collect(),
            };
            let mut made = backends::generate_gradients(
                self.backends.optimizer.as_ref(),
                &leader,
                &contrast,
                t,
                &format!("g{t}-c{k}"),
            )?;
            made.retain(|g| !g.text.trim().is_empty());
            for g in &mut made {
                g.source_cluster = Some(*k);
            }
            fresh.extend(made);
        }
        let gradient_texts: Vec<String> = fresh.iter().map(|g| g.text.clone()).collect();
        for (g, e) in fresh.iter_mut().zip(self.encoder.embed_batch(&gradient_texts)?) {
            g.embedding = e;
        }
        let gradients_admitted = fresh.len();

        let mut pool = GradientPool::new(cfg.decay, cfg.pool_cap, cfg.pool_min_weight)
            .with_entries(state.pool.clone());
        pool.admit(fresh, t)?;
        let refined = if pool.is_empty() {
            Default::default()
        } else {
            pool.refine(
                cfg.gradient_clusters,
                cfg.top_n_per_cluster,
                &mut iteration_rng(seed, "kmeans-gradients", t),
            )?
        };

        let directions = refined.round_robin();
        let mut seen: HashSet<String> = state.beam.iter().map(|b| b.prompt_text.clone()).collect();
        let mut candidates: Vec<CandidateStats> = Vec::new();
        let max_calls = directions.len() * state.beam.len();
        for call in 0..max_calls {
            if candidates.len() >= cfg.candidates_per_iter {
                break;
            }
            let gradient = directions[call % directions.len()];
            let parent = &state.beam[call % state.beam.len()];
            let rewrites = backends::generate_candidates(self.backends.optimizer.as_ref(), &parent.prompt_text, gradient)?;
            for text in rewrites {
                let text = text.trim().to_string();
                if text.is_empty() || !seen.insert(text.clone()) {
                    continue;
                }
                candidates.push(CandidateStats {
                    parent_id: Some(prompt_digest(&parent.prompt_text)),
                    source_gradient_id: Some(gradient.id.clone()),
                    ..CandidateStats::new(text)
                });
                if candidates.len() >= cfg.candidates_per_iter {
                    break;
                }
            }
        }
        let candidates_generated = candidates.len();

        let mut arms: Vec<CandidateStats> = state.beam.iter().map(BeamEntry::to_stats).collect();
        arms.extend(candidates);
        let params = UcbParams {
            budget: cfg.ucb_budget,
            minibatch: cfg.eval_minibatch.min(self.eval_pool.len()),
            beam_width: cfg.beam_width,
            alpha: cfg.ucb_alpha,
        };
        let outcome = ucb_select(
            arms,
            &self.eval_pool,
            params,
            &mut iteration_rng(seed, "ucb", t),
            |prompt, minibatch| Ok(mean_score(&self.predict_all(prompt, minibatch)?)),
        )?;

        let beam: Vec<BeamEntry> = outcome.selected.iter().map(BeamEntry::from_stats).collect();
        let new_leader = beam[0].prompt_text.clone();
        let leader_score = self.heldout_score(&new_leader)?;
        let (best_prompt, best_score) = if leader_score > state.best_score {
            (new_leader.clone(), leader_score)
        } else {
            (state.best_prompt.clone(), state.best_score)
        };

        let next = RunState {
            iteration: t + 1,
            beam,
            pool: pool.entries,
            bandit_total: state.bandit_total + outcome.pulls,
            rng: state.rng,
            best_prompt,
            best_score,
        };
        let trace = IterationTrace {
            iteration: t,
            batch_size: batch.len(),
            batch_accuracy,
            clusters: reports,
            quotas,
            gradients_admitted,
            pool_size: next.pool.len(),
            refined_directions: directions.len(),
            candidates_generated,
            ucb_pulls: outcome.pulls,
            beam: next
                .beam
                .iter()
                .map(|b| BeamSnapshot {
                    digest: prompt_digest(&b.prompt_text),
                    score: b.score,
                    pulls: b.pulls,
                })
                .collect(),
            leader_prompt: new_leader,
            leader_score,
            best_score: next.best_score,
        };
        info!(
            iteration = t,
            batch_accuracy,
            gradients = gradients_admitted,
            pool = trace.pool_size,
            candidates = candidates_generated,
            leader_score,
            "iteration done"
        );
        Ok(IterationOutput { state: next, trace })
    }

    /// Iterates from `state` until the configured iteration count.
    ///
    /// `on_iteration` runs after every completed iteration (checkpointing,
    /// trace output). A failing iteration is retried from the same state up to
    /// `retries` times before the error is returned.
    pub fn run<F>(&self, mut state: RunState, mut on_iteration: F) -> Result<RunState>
    where
        F: FnMut(&RunState, &IterationTrace) -> Result<()>,
    {
        while state.iteration < self.config.iterations {
            let mut attempt = 0;
            let out = loop {
                match self.run_iteration(&state) {
                    Ok(out) => break out,
                    Err(e) if attempt < self.config.retries && !e.is_config_error() => {
                        attempt += 1;
                        warn!(iteration = state.iteration, attempt, error = %e, "iteration failed; resuming from last state");
                    }
                    Err(e) => return Err(e),
                }
            };
            on_iteration(&out.state, &out.trace)?;
            debug!(iteration = out.state.iteration, "state advanced");
            state = out.state;
        }
        Ok(state)
    }

    /// Summarizes a finished run.
    pub fn report(&self, state: &RunState, traces: &[IterationTrace]) -> Result<OptimizeReport> {
        let initial = self.config.initial_prompt().to_string();
        Ok(OptimizeReport {
            initial_score: self.heldout_score(&initial)?,
            initial_test_score: self.test_score(&initial)?,
            best_prompt: state.best_prompt.clone(),
            best_score: state.best_score,
            best_test_score: self.test_score(&state.best_prompt)?,
            final_prompt: state.leader().map(|b| b.prompt_text.clone()).unwrap_or_default(),
            iterations_run: state.iteration,
            iterations: traces.iter().map(IterationSummary::from).collect(),
            config: self.config.clone(),
            initial_prompt: initial,
        })
    }

    /// Runs a full optimization from scratch and reports on it.
    pub fn optimize(&self) -> Result<(RunState, OptimizeReport)> {
        let mut traces = Vec::new();
        let state = self.run(self.initial_state()?, |_, trace| {
            traces.push(trace.clone());
            Ok(())
        })?;
        let report = self.report(&state, &traces)?;
        Ok((state, report))
    }
}

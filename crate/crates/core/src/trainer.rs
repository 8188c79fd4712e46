//! Block-coordinate descent over mentions, features, types and type contexts.

use std::time::Instant;

use ndarray::{Array2, ArrayView1, ArrayViewMut1, Axis};
use rand::SeedableRng;
use rayon::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingStore;
use crate::error::{Error, Result};
use crate::graph::{HeteroGraph, Variant};
use crate::objective::{
    feature_block_gradient, mention_block_gradient, objective, partial_label_loss, sigmoid, type_block_gradient,
    type_context_block_gradient, Executor, Negatives, ObjectiveValue,
};
use crate::sampler::AliasSampler;

/// How each block is moved along its gradient.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateRule {
    /// Every vector takes one step of size `α` per loss term that touches it,
    /// applied in turn within its block.
    #[default]
    Incremental,
    /// One step of size `α` along the full block gradient.
    Batch,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    /// Embedding dimension `d`.
    pub dim: usize,
    /// Negative samples `Z` per positive link.
    pub negatives: usize,
    /// ℓ2 regularization `λ` on mention and type vectors.
    pub lambda: f64,
    /// Initial learning rate `α`.
    pub learning_rate: f64,
    /// Iteration `t` uses the rate `α / (1 + (t − 1) / rate_decay)`; zero
    /// keeps the rate fixed.
    pub rate_decay: f64,
    /// Iteration cap `T`.
    pub max_iters: usize,
    /// Stop once `|O_t − O_{t−1}| / |O_{t−1}|` falls below this.
    pub tol: f64,
    pub seed: u64,
    pub variant: Variant,
    /// Initial entries are uniform in `[−init_scale, init_scale]`.
    pub init_scale: f64,
    /// Worker threads for gradient accumulation; 1 runs sequentially.
    pub threads: usize,
    pub update_rule: UpdateRule,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            dim: 50,
            negatives: 5,
            lambda: 1e-4,
            learning_rate: 0.25,
            rate_decay: 2.0,
            max_iters: 50,
            tol: 1e-4,
            seed: 0,
            variant: Variant::Ple,
            init_scale: 0.01,
            threads: 1,
            update_rule: UpdateRule::Incremental,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.dim == 0 {
            return fail("dim must be at least 1");
        }
        if self.lambda.is_nan() || self.lambda < 0.0 {
            return fail("lambda must be non-negative");
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return fail("learning_rate must be positive");
        }
        if self.rate_decay.is_nan() || self.rate_decay < 0.0 {
            return fail("rate_decay must be non-negative");
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return fail("tol must be positive");
        }
        if self.init_scale.is_nan() || self.init_scale < 0.0 {
            return fail("init_scale must be non-negative");
        }
        if self.threads == 0 {
            return fail("threads must be at least 1");
        }
        Ok(())
    }

    /// Learning rate used in iteration `iter` (counted from 1).
    pub fn rate_at(&self, iter: usize) -> f64 {
        if self.rate_decay == 0.0 {
            self.learning_rate
        } else {
            self.learning_rate / (1.0 + iter.saturating_sub(1) as f64 / self.rate_decay)
        }
    }
}

/// One line of the iteration log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    #[serde(rename = "O")]
    pub objective: f64,
    #[serde(rename = "O_MY")]
    pub mention_type: f64,
    #[serde(rename = "O_MF")]
    pub mention_feature: f64,
    #[serde(rename = "O_YY")]
    pub type_type: f64,
    pub wall_ms: f64,
}

impl IterationRecord {
    fn new(iter: usize, value: ObjectiveValue, wall_ms: f64) -> Self {
        IterationRecord {
            iter,
            objective: value.total(),
            mention_type: value.mention_type,
            mention_feature: value.mention_feature,
            type_type: value.type_type,
            wall_ms,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub embeddings: EmbeddingStore,
    pub log: Vec<IterationRecord>,
    pub converged: bool,
}

/// Noise samplers over feature degrees in `G_MF` and type degrees in `G_YY`.
pub fn noise_samplers(graph: &HeteroGraph) -> Result<(Option<AliasSampler>, Option<AliasSampler>)> {
    let features = if graph.mention_feature_links().is_empty() {
        None
    } else {
        Some(AliasSampler::from_degrees(&graph.feature_degrees())?)
    };
    let types = if graph.type_type_links().is_empty() {
        None
    } else {
        Some(AliasSampler::from_degrees(&graph.type_degrees())?)
    };
    Ok((features, types))
}

/// The graph actually optimized under `variant`: PLE-NoCo drops `G_YY`.
pub fn graph_for_variant(graph: &HeteroGraph, variant: Variant) -> std::borrow::Cow<'_, HeteroGraph> {
    match variant {
        Variant::PleNoCo if !graph.type_type_links().is_empty() => {
            std::borrow::Cow::Owned(graph.without_type_links())
        }
        _ => std::borrow::Cow::Borrowed(graph),
    }
}

const DIVERGENCE_WINDOW: usize = 5;
const DIVERGENCE_FACTOR: f64 = 10.0;

pub fn train(graph: &HeteroGraph, config: &TrainingConfig) -> Result<TrainedModel> {
    config.validate()?;
    let graph = graph_for_variant(graph, config.variant);
    let graph = graph.as_ref();
    if config.variant != Variant::PleNoCo && graph.type_type_links().is_empty() {
        log::warn!("variant {} trained on a graph without type-type links", config.variant);
    }
    let all_candidates = (0..graph.num_mentions())
        .filter(|&i| graph.candidates(i).len() == graph.num_types())
        .count();
    if all_candidates > 0 {
        log::warn!("{all_candidates} mentions carry every type; their partial-label loss is 0");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut emb = EmbeddingStore::uniform(
        graph.num_mentions(),
        graph.num_features(),
        graph.num_types(),
        config.dim,
        config.init_scale,
        &mut rng,
    );
    let (feature_sampler, type_sampler) = noise_samplers(graph)?;
    let index = LinkIndex::new(graph);

    let pool = if config.threads > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(config.threads)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?,
        )
    } else {
        None
    };
    let exec = if config.threads > 1 {
        Executor::Chunked(config.threads)
    } else {
        Executor::Sequential
    };

    let mut log: Vec<IterationRecord> = Vec::new();
    let mut converged = false;
    for iter in 1..=config.max_iters {
        let start = Instant::now();
        let alpha = config.rate_at(iter);
        let negatives = Negatives::draw(
            graph,
            config.negatives,
            feature_sampler.as_ref(),
            type_sampler.as_ref(),
            &mut rng,
        )?;

        let step = |emb: &mut EmbeddingStore| -> Result<()> {
            match config.update_rule {
                UpdateRule::Incremental => {
                    incremental_sweep(graph, &index, emb, &negatives, alpha, config.lambda, exec != Executor::Sequential);
                    if emb.is_finite() {
                        Ok(())
                    } else {
                        Err(Error::NonFinite { block: "embeddings" })
                    }
                }
                UpdateRule::Batch => {
                    let g = mention_block_gradient(graph, emb, config.lambda, &negatives, exec)?;
                    emb.mentions.scaled_add(-alpha, &g);
                    let g = feature_block_gradient(graph, emb, &negatives, exec)?;
                    emb.features.scaled_add(-alpha, &g);
                    let g = type_block_gradient(graph, emb, config.lambda, &negatives, exec)?;
                    emb.types.scaled_add(-alpha, &g);
                    let g = type_context_block_gradient(graph, emb, &negatives, exec)?;
                    emb.type_contexts.scaled_add(-alpha, &g);
                    Ok(())
                }
            }
        };
        match &pool {
            Some(pool) => pool.install(|| step(&mut emb))?,
            None => step(&mut emb)?,
        }

        let value = objective(graph, &emb, config.lambda, &negatives)?;
        let record = IterationRecord::new(iter, value, start.elapsed().as_secs_f64() * 1e3);
        log::debug!(
            "iter {iter}: O={:.6} O_MY={:.6} O_MF={:.6} O_YY={:.6}",
            record.objective,
            record.mention_type,
            record.mention_feature,
            record.type_type
        );

        if iter > DIVERGENCE_WINDOW {
            let previous = log[iter - 1 - DIVERGENCE_WINDOW].objective;
            if record.objective > DIVERGENCE_FACTOR * previous {
                return Err(Error::Diverged {
                    iteration: iter,
                    current: record.objective,
                    previous,
                });
            }
        }
        let rel_change = log
            .last()
            .map(|prev| (record.objective - prev.objective).abs() / prev.objective.abs());
        log.push(record);
        if rel_change.is_some_and(|r| r < config.tol) {
            converged = true;
            break;
        }
    }
    log::info!(
        "training stopped after {} iterations (converged: {converged})",
        log.len()
    );
    Ok(TrainedModel {
        embeddings: emb,
        log,
        converged,
    })
}

/// Links grouped by the vector they update.
struct LinkIndex {
    /// `G_MF` link ids per mention.
    mention_links: Vec<Vec<usize>>,
    /// `(G_YY link id, forward)` per source type.
    type_sources: Vec<Vec<(usize, bool)>>,
}

impl LinkIndex {
    fn new(graph: &HeteroGraph) -> Self {
        let mut mention_links = vec![Vec::new(); graph.num_mentions()];
        for (e, l) in graph.mention_feature_links().iter().enumerate() {
            mention_links[l.src].push(e);
        }
        let mut type_sources = vec![Vec::new(); graph.num_types()];
        for (e, l) in graph.type_type_links().iter().enumerate() {
            type_sources[l.src].push((e, true));
            type_sources[l.dst].push((e, false));
        }
        LinkIndex {
            mention_links,
            type_sources,
        }
    }
}

/// A term touching a context vector: `(source row, link weight, positive)`.
type ContextTerm = (usize, f64, bool);

fn for_each_row<F>(m: &mut Array2<f64>, parallel: bool, f: F)
where
    F: Fn(usize, ArrayViewMut1<'_, f64>) + Sync + Send,
{
    if parallel {
        m.axis_iter_mut(Axis(0)).into_par_iter().enumerate().for_each(|(i, r)| f(i, r));
    } else {
        for (i, r) in m.axis_iter_mut(Axis(0)).enumerate() {
            f(i, r);
        }
    }
}

fn step_toward(mut x: ArrayViewMut1<'_, f64>, a: f64, y: ArrayView1<'_, f64>) {
    x.zip_mut_with(&y, |x, &y| *x += a * y);
}

/// Steps a source vector through `−log σ(ctxᵀx) − Σ log σ(−ctx_lᵀx)`, one
/// term at a time.
fn source_steps(mut x: ArrayViewMut1<'_, f64>, context: &Array2<f64>, positive: usize, negatives: &[usize], scale: f64) {
    let c = context.row(positive);
    let g = sigmoid(-c.dot(&x));
    step_toward(x.view_mut(), scale * g, c);
    for &l in negatives {
        let c = context.row(l);
        let g = sigmoid(c.dot(&x));
        step_toward(x.view_mut(), -scale * g, c);
    }
}

fn context_steps(mut c: ArrayViewMut1<'_, f64>, sources: &Array2<f64>, terms: &[ContextTerm], alpha: f64) {
    for &(src, w, positive) in terms {
        let s = sources.row(src);
        let dot = c.dot(&s);
        let a = if positive { alpha * w * sigmoid(-dot) } else { -alpha * w * sigmoid(dot) };
        step_toward(c.view_mut(), a, s);
    }
}

/// One pass of per-term updates over the blocks in the order mentions,
/// features, types, type contexts. Within a block only that block's
/// vectors move, so rows may be processed in parallel without changing the
/// result; the hinge updates of the type block run in mention order.
fn incremental_sweep(
    graph: &HeteroGraph,
    index: &LinkIndex,
    emb: &mut EmbeddingStore,
    negatives: &Negatives,
    alpha: f64,
    lambda: f64,
    parallel: bool,
) {
    let shrink = 1.0 - alpha * lambda;
    let mf = graph.mention_feature_links();
    let yy = graph.type_type_links();
    let EmbeddingStore {
        mentions,
        features,
        types,
        type_contexts,
    } = emb;

    for_each_row(mentions, parallel, |i, mut u| {
        u *= shrink;
        let h = partial_label_loss(u.view(), types.view(), graph.candidates(i));
        if let (true, Some(neg)) = (h.is_active(), h.negative) {
            step_toward(u.view_mut(), alpha, types.row(h.positive));
            step_toward(u.view_mut(), -alpha, types.row(neg));
        }
        for &e in &index.mention_links[i] {
            let l = mf[e];
            source_steps(u.view_mut(), features, l.dst, negatives.for_feature_link(e), alpha * l.weight);
        }
    });

    let mut feature_terms: Vec<Vec<ContextTerm>> = vec![Vec::new(); graph.num_features()];
    for (e, l) in mf.iter().enumerate() {
        feature_terms[l.dst].push((l.src, l.weight, true));
        for &j in negatives.for_feature_link(e) {
            feature_terms[j].push((l.src, l.weight, false));
        }
    }
    for_each_row(features, parallel, |j, c| context_steps(c, mentions, &feature_terms[j], alpha));

    *types *= shrink;
    for i in 0..graph.num_mentions() {
        let u = mentions.row(i);
        let h = partial_label_loss(u, types.view(), graph.candidates(i));
        if let (true, Some(neg)) = (h.is_active(), h.negative) {
            step_toward(types.row_mut(h.positive), alpha, u);
            step_toward(types.row_mut(neg), -alpha, u);
        }
    }
    for_each_row(types, parallel, |k, mut v| {
        for &(e, forward) in &index.type_sources[k] {
            let l = yy[e];
            let (ctx, negs) = if forward {
                (l.dst, negatives.for_type_link_forward(e))
            } else {
                (l.src, negatives.for_type_link_backward(e))
            };
            source_steps(v.view_mut(), type_contexts, ctx, negs, alpha * l.weight);
        }
    });

    let mut context_terms: Vec<Vec<ContextTerm>> = vec![Vec::new(); graph.num_types()];
    for (e, l) in yy.iter().enumerate() {
        context_terms[l.dst].push((l.src, l.weight, true));
        for &t in negatives.for_type_link_forward(e) {
            context_terms[t].push((l.src, l.weight, false));
        }
        context_terms[l.src].push((l.dst, l.weight, true));
        for &t in negatives.for_type_link_backward(e) {
            context_terms[t].push((l.dst, l.weight, false));
        }
    }
    for_each_row(type_contexts, parallel, |k, c| context_steps(c, types, &context_terms[k], alpha));
}

pub fn log_to_jsonl(log: &[IterationRecord]) -> String {
    let mut out = String::new();
    for r in log {
        out.push_str(&serde_json::to_string(r).expect("serializable"));
        out.push('\n');
    }
    out
}

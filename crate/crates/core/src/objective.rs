//! The joint objective `O = O_MY + O_MF + O_YY` under a fixed draw of
//! negative samples, and its exact gradients.
//!
//! * `O_MY = Σ_i ℓ_i + λ/2 Σ_i ‖u_i‖² + λ/2 Σ_k ‖v_k‖²` with the partial-label
//!   hinge `ℓ_i = max(0, 1 − [max_{Y_i} vᵀu_i − max_{Ȳ_i} vᵀu_i])`.
//! * `O_MF = −Σ_{(i,j)} w_ij [log σ(c_jᵀu_i) + Σ_l log σ(−c_lᵀu_i)]`.
//! * `O_YY` applies the same negative-sampling form to both directions of each
//!   undirected type link, with `v` as the source view and `v'` as context.
//!
//! Gradients are derived from these expressions directly; the hinge term
//! contributes `v⁻ − v⁺` to `∂O/∂u_i` while the hinge is active.

use std::ops::Range;

use ndarray::{Array2, ArrayView1, ArrayView2, ArrayViewMut1, Zip};
use rand::Rng;
use rayon::prelude::*;

use crate::embedding::EmbeddingStore;
use crate::error::{Error, Result};
use crate::graph::HeteroGraph;
use crate::sampler::AliasSampler;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log σ(x)` without overflow for large `|x|`.
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// `s(m_i, y_k) = v_kᵀu_i`.
pub fn score(u: ArrayView1<'_, f64>, v: ArrayView1<'_, f64>) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    Ok(u.dot(&v))
}

/// Outcome of the partial-label hinge for one mention.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hinge {
    pub loss: f64,
    /// Best-scoring candidate type (`v⁺`).
    pub positive: usize,
    /// Best-scoring non-candidate type (`v⁻`); `None` when every type is a candidate.
    pub negative: Option<usize>,
}

impl Hinge {
    pub fn is_active(&self) -> bool {
        self.negative.is_some() && self.loss > 0.0
    }
}

/// Partial-label loss of a mention vector against all type vectors.
/// `candidates` must be sorted ascending and non-empty. Ties go to the
/// smallest type id.
pub fn partial_label_loss(u: ArrayView1<'_, f64>, types: ArrayView2<'_, f64>, candidates: &[usize]) -> Hinge {
    debug_assert!(!candidates.is_empty());
    let mut best_pos: Option<(usize, f64)> = None;
    let mut best_neg: Option<(usize, f64)> = None;
    let mut next = candidates.iter().peekable();
    for (k, v) in types.rows().into_iter().enumerate() {
        let s = u.dot(&v);
        let slot = if next.peek() == Some(&&k) {
            next.next();
            &mut best_pos
        } else {
            &mut best_neg
        };
        if slot.is_none_or(|(_, b)| s > b) {
            *slot = Some((k, s));
        }
    }
    let (positive, pos_score) = best_pos.expect("candidate set is non-empty");
    match best_neg {
        Some((negative, neg_score)) => Hinge {
            loss: (1.0 - (pos_score - neg_score)).max(0.0),
            positive,
            negative: Some(negative),
        },
        None => Hinge {
            loss: 0.0,
            positive,
            negative: None,
        },
    }
}

/// One fixed draw of `Z` negatives per `G_MF` link and per direction of each `G_YY` link.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Negatives {
    z: usize,
    mention_feature: Vec<usize>,
    /// Context types contrasted with `v_src` for the direction `src → dst`.
    type_forward: Vec<usize>,
    /// Context types contrasted with `v_dst` for the direction `dst → src`.
    type_backward: Vec<usize>,
}

impl Negatives {
    pub fn none(graph: &HeteroGraph) -> Self {
        Negatives {
            z: 0,
            mention_feature: Vec::new(),
            type_forward: Vec::new(),
            type_backward: Vec::new(),
        }
        .checked(graph)
        .expect("empty draw is always consistent")
    }

    /// Draws from the given samplers; a sampler may be `None` only when
    /// `z == 0` or its link set is empty.
    pub fn draw<R: Rng + ?Sized>(
        graph: &HeteroGraph,
        z: usize,
        feature_sampler: Option<&AliasSampler>,
        type_sampler: Option<&AliasSampler>,
        rng: &mut R,
    ) -> Result<Self> {
        let need = |s: Option<&AliasSampler>, links: usize, what: &str| -> Result<()> {
            if z > 0 && links > 0 && s.is_none() {
                return Err(Error::Sampler(format!("no {what} sampler for negative draws")));
            }
            Ok(())
        };
        need(feature_sampler, graph.mention_feature_links().len(), "feature")?;
        need(type_sampler, graph.type_type_links().len(), "type")?;

        let mut mention_feature = Vec::with_capacity(z * graph.mention_feature_links().len());
        if let Some(s) = feature_sampler {
            for l in graph.mention_feature_links() {
                s.sample_excluding(rng, z, Some(l.dst), &mut mention_feature)?;
            }
        }
        let mut type_forward = Vec::with_capacity(z * graph.type_type_links().len());
        let mut type_backward = Vec::with_capacity(z * graph.type_type_links().len());
        if let Some(s) = type_sampler {
            for l in graph.type_type_links() {
                s.sample_excluding(rng, z, Some(l.dst), &mut type_forward)?;
                s.sample_excluding(rng, z, Some(l.src), &mut type_backward)?;
            }
        }
        Ok(Negatives {
            z,
            mention_feature,
            type_forward,
            type_backward,
        })
    }

    /// Builds a draw from explicit id lists, e.g. for tests.
    pub fn from_parts(
        graph: &HeteroGraph,
        z: usize,
        mention_feature: Vec<usize>,
        type_forward: Vec<usize>,
        type_backward: Vec<usize>,
    ) -> Result<Self> {
        Negatives {
            z,
            mention_feature,
            type_forward,
            type_backward,
        }
        .checked(graph)
    }

    fn checked(self, graph: &HeteroGraph) -> Result<Self> {
        let mf = graph.mention_feature_links().len();
        let yy = graph.type_type_links().len();
        let ok = self.mention_feature.len() == self.z * mf
            && self.type_forward.len() == self.z * yy
            && self.type_backward.len() == self.z * yy
            && self.mention_feature.iter().all(|&j| j < graph.num_features())
            && self
                .type_forward
                .iter()
                .chain(&self.type_backward)
                .all(|&k| k < graph.num_types());
        if ok {
            Ok(self)
        } else {
            Err(Error::Sampler("negative draw does not match the graph".into()))
        }
    }

    pub fn per_link(&self) -> usize {
        self.z
    }

    pub fn for_feature_link(&self, e: usize) -> &[usize] {
        &self.mention_feature[e * self.z..(e + 1) * self.z]
    }

    pub fn for_type_link_forward(&self, e: usize) -> &[usize] {
        &self.type_forward[e * self.z..(e + 1) * self.z]
    }

    pub fn for_type_link_backward(&self, e: usize) -> &[usize] {
        &self.type_backward[e * self.z..(e + 1) * self.z]
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ObjectiveValue {
    pub mention_type: f64,
    pub mention_feature: f64,
    pub type_type: f64,
}

impl ObjectiveValue {
    pub fn total(&self) -> f64 {
        self.mention_type + self.mention_feature + self.type_type
    }
}

fn finite(x: f64, block: &'static str) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::NonFinite { block })
    }
}

fn check_shapes(graph: &HeteroGraph, emb: &EmbeddingStore) -> Result<()> {
    let shapes = [
        (emb.mentions.nrows(), graph.num_mentions()),
        (emb.features.nrows(), graph.num_features()),
        (emb.types.nrows(), graph.num_types()),
        (emb.type_contexts.nrows(), graph.num_types()),
    ];
    for (left, right) in shapes {
        if left != right {
            return Err(Error::DimensionMismatch { left, right });
        }
    }
    let d = emb.dim();
    for b in emb.blocks() {
        if b.ncols() != d {
            return Err(Error::DimensionMismatch { left: b.ncols(), right: d });
        }
    }
    Ok(())
}

/// Negative-sampled `−log p(context | source)` for one directed link.
fn directed_link_loss(source: ArrayView1<'_, f64>, context: &Array2<f64>, positive: usize, negatives: &[usize]) -> f64 {
    let mut loss = -log_sigmoid(context.row(positive).dot(&source));
    for &l in negatives {
        loss -= log_sigmoid(-context.row(l).dot(&source));
    }
    loss
}

pub fn objective(
    graph: &HeteroGraph,
    emb: &EmbeddingStore,
    lambda: f64,
    negatives: &Negatives,
) -> Result<ObjectiveValue> {
    check_shapes(graph, emb)?;
    negatives.clone().checked(graph)?;

    let mut hinge = 0.0;
    for i in 0..graph.num_mentions() {
        hinge += partial_label_loss(emb.mentions.row(i), emb.types.view(), graph.candidates(i)).loss;
    }
    let sq = |a: &Array2<f64>| a.iter().map(|x| x * x).sum::<f64>();
    let mention_type = finite(hinge + 0.5 * lambda * (sq(&emb.mentions) + sq(&emb.types)), "O_MY")?;

    let mut mf = 0.0;
    for (e, l) in graph.mention_feature_links().iter().enumerate() {
        mf += l.weight * directed_link_loss(emb.mentions.row(l.src), &emb.features, l.dst, negatives.for_feature_link(e));
    }
    let mention_feature = finite(mf, "O_MF")?;

    let mut yy = 0.0;
    for (e, l) in graph.type_type_links().iter().enumerate() {
        let forward = directed_link_loss(emb.types.row(l.src), &emb.type_contexts, l.dst, negatives.for_type_link_forward(e));
        let backward = directed_link_loss(emb.types.row(l.dst), &emb.type_contexts, l.src, negatives.for_type_link_backward(e));
        yy += l.weight * (forward + backward);
    }
    let type_type = finite(yy, "O_YY")?;

    Ok(ObjectiveValue {
        mention_type,
        mention_feature,
        type_type,
    })
}

/// `∂O` with respect to each embedding block.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub mentions: Array2<f64>,
    pub features: Array2<f64>,
    pub types: Array2<f64>,
    pub type_contexts: Array2<f64>,
}

/// All four block gradients at the same point.
pub fn gradients(
    graph: &HeteroGraph,
    emb: &EmbeddingStore,
    lambda: f64,
    negatives: &Negatives,
) -> Result<Gradients> {
    check_shapes(graph, emb)?;
    negatives.clone().checked(graph)?;
    let exec = Executor::Sequential;
    Ok(Gradients {
        mentions: mention_block_gradient(graph, emb, lambda, negatives, exec)?,
        features: feature_block_gradient(graph, emb, negatives, exec)?,
        types: type_block_gradient(graph, emb, lambda, negatives, exec)?,
        type_contexts: type_context_block_gradient(graph, emb, negatives, exec)?,
    })
}

/// How block gradients are accumulated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Executor {
    Sequential,
    /// Split the work into this many chunks, accumulate each on the current
    /// rayon pool, then sum the partial results in chunk order.
    Chunked(usize),
}

fn accumulate<F>(rows: usize, cols: usize, len: usize, exec: Executor, f: F) -> Array2<f64>
where
    F: Fn(Range<usize>, &mut Array2<f64>) + Sync,
{
    match exec {
        Executor::Chunked(chunks) if chunks > 1 && len > chunks => {
            let size = len.div_ceil(chunks);
            let partials: Vec<Array2<f64>> = (0..chunks)
                .into_par_iter()
                .map(|c| {
                    let mut out = Array2::zeros((rows, cols));
                    f(c * size..((c + 1) * size).min(len), &mut out);
                    out
                })
                .collect();
            let mut total = Array2::zeros((rows, cols));
            for p in partials {
                total += &p;
            }
            total
        }
        _ => {
            let mut out = Array2::zeros((rows, cols));
            f(0..len, &mut out);
            out
        }
    }
}

fn axpy(mut target: ArrayViewMut1<'_, f64>, a: f64, x: ArrayView1<'_, f64>) {
    Zip::from(&mut target).and(&x).for_each(|t, &x| *t += a * x);
}

fn check_finite(g: Array2<f64>, block: &'static str) -> Result<Array2<f64>> {
    if g.iter().all(|x| x.is_finite()) {
        Ok(g)
    } else {
        Err(Error::NonFinite { block })
    }
}

/// Adds the gradient of `w·[−log σ(ctxᵀsrc) − Σ log σ(−ctx_lᵀsrc)]` with
/// respect to the source vector into `out`.
fn source_grad(
    out: ArrayViewMut1<'_, f64>,
    source: ArrayView1<'_, f64>,
    context: &Array2<f64>,
    positive: usize,
    negatives: &[usize],
    weight: f64,
) {
    let mut out = out;
    let c = context.row(positive);
    axpy(out.view_mut(), -weight * sigmoid(-c.dot(&source)), c);
    for &l in negatives {
        let c = context.row(l);
        axpy(out.view_mut(), weight * sigmoid(c.dot(&source)), c);
    }
}

/// Adds the gradient of the same directed-link loss with respect to each
/// context vector involved.
fn context_grad(
    out: &mut Array2<f64>,
    source: ArrayView1<'_, f64>,
    context: &Array2<f64>,
    positive: usize,
    negatives: &[usize],
    weight: f64,
) {
    let s = -weight * sigmoid(-context.row(positive).dot(&source));
    axpy(out.row_mut(positive), s, source);
    for &l in negatives {
        let s = weight * sigmoid(context.row(l).dot(&source));
        axpy(out.row_mut(l), s, source);
    }
}

pub(crate) fn mention_block_gradient(
    graph: &HeteroGraph,
    emb: &EmbeddingStore,
    lambda: f64,
    negatives: &Negatives,
    exec: Executor,
) -> Result<Array2<f64>> {
    let (n, d) = (graph.num_mentions(), emb.dim());
    let mut grad = accumulate(n, d, n, exec, |range, out| {
        for i in range {
            let u = emb.mentions.row(i);
            axpy(out.row_mut(i), lambda, u);
            let h = partial_label_loss(u, emb.types.view(), graph.candidates(i));
            if let (true, Some(neg)) = (h.is_active(), h.negative) {
                axpy(out.row_mut(i), 1.0, emb.types.row(neg));
                axpy(out.row_mut(i), -1.0, emb.types.row(h.positive));
            }
        }
    });
    let links = graph.mention_feature_links();
    grad += &accumulate(n, d, links.len(), exec, |range, out| {
        for e in range {
            let l = links[e];
            source_grad(
                out.row_mut(l.src),
                emb.mentions.row(l.src),
                &emb.features,
                l.dst,
                negatives.for_feature_link(e),
                l.weight,
            );
        }
    });
    check_finite(grad, "dO/dU")
}

pub(crate) fn feature_block_gradient(
    graph: &HeteroGraph,
    emb: &EmbeddingStore,
    negatives: &Negatives,
    exec: Executor,
) -> Result<Array2<f64>> {
    let links = graph.mention_feature_links();
    let grad = accumulate(graph.num_features(), emb.dim(), links.len(), exec, |range, out| {
        for e in range {
            let l = links[e];
            context_grad(
                out,
                emb.mentions.row(l.src),
                &emb.features,
                l.dst,
                negatives.for_feature_link(e),
                l.weight,
            );
        }
    });
    check_finite(grad, "dO/dC")
}

pub(crate) fn type_block_gradient(
    graph: &HeteroGraph,
    emb: &EmbeddingStore,
    lambda: f64,
    negatives: &Negatives,
    exec: Executor,
) -> Result<Array2<f64>> {
    let (k, d) = (graph.num_types(), emb.dim());
    let mut grad = accumulate(k, d, graph.num_mentions(), exec, |range, out| {
        for i in range {
            let u = emb.mentions.row(i);
            let h = partial_label_loss(u, emb.types.view(), graph.candidates(i));
            if let (true, Some(neg)) = (h.is_active(), h.negative) {
                axpy(out.row_mut(neg), 1.0, u);
                axpy(out.row_mut(h.positive), -1.0, u);
            }
        }
    });
    grad.scaled_add(lambda, &emb.types);
    let links = graph.type_type_links();
    grad += &accumulate(k, d, links.len(), exec, |range, out| {
        for e in range {
            let l = links[e];
            source_grad(
                out.row_mut(l.src),
                emb.types.row(l.src),
                &emb.type_contexts,
                l.dst,
                negatives.for_type_link_forward(e),
                l.weight,
            );
            source_grad(
                out.row_mut(l.dst),
                emb.types.row(l.dst),
                &emb.type_contexts,
                l.src,
                negatives.for_type_link_backward(e),
                l.weight,
            );
        }
    });
    check_finite(grad, "dO/dV")
}

pub(crate) fn type_context_block_gradient(
    graph: &HeteroGraph,
    emb: &EmbeddingStore,
    negatives: &Negatives,
    exec: Executor,
) -> Result<Array2<f64>> {
    let links = graph.type_type_links();
    let grad = accumulate(graph.num_types(), emb.dim(), links.len(), exec, |range, out| {
        for e in range {
            let l = links[e];
            context_grad(
                out,
                emb.types.row(l.src),
                &emb.type_contexts,
                l.dst,
                negatives.for_type_link_forward(e),
                l.weight,
            );
            context_grad(
                out,
                emb.types.row(l.dst),
                &emb.type_contexts,
                l.src,
                negatives.for_type_link_backward(e),
                l.weight,
            );
        }
    });
    check_finite(grad, "dO/dV'")
}

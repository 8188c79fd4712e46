//! Top-down type-path search over a mention's candidate sub-tree, corpus
//! denoising, and embeddings for mentions unseen during training.

use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::corpus::{LabeledCorpus, Mention};
use crate::embedding::EmbeddingStore;
use crate::error::{Error, Result};
use crate::features::{FeatureConfig, FeatureVocabulary};
use crate::graph::{HeteroGraph, TypeCorrelation};
use crate::hierarchy::{TypeHierarchy, TypeId, TypeSet};
use crate::trainer::{train, TrainedModel, TrainingConfig};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    #[default]
    Mean,
    Sum,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceConfig {
    /// Minimum score `η` for extending a path.
    pub threshold: f64,
    pub unseen_pooling: Pooling,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            threshold: 0.1,
            unseen_pooling: Pooling::Mean,
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.threshold.is_finite() {
            return Err(Error::Config("threshold must be a finite number".into()));
        }
        Ok(())
    }
}

/// Starting at the root, repeatedly moves to the best-scoring candidate
/// child and keeps it while its score exceeds `threshold`. Ties go to the
/// smallest type id. The result may be empty.
pub fn infer_type_path(
    mention: ArrayView1<'_, f64>,
    types: ArrayView2<'_, f64>,
    candidates: &TypeSet,
    hierarchy: &TypeHierarchy,
    threshold: f64,
) -> Vec<TypeId> {
    let mut path = Vec::new();
    let mut node: Option<TypeId> = None;
    loop {
        let best = hierarchy
            .children(node)
            .iter()
            .filter(|c| candidates.contains(c))
            .map(|&c| (c, types.row(c.0).dot(&mention)))
            .fold(None, |best: Option<(TypeId, f64)>, (c, s)| match best {
                Some((b, bs)) if bs > s || (bs == s && b < c) => Some((b, bs)),
                _ => Some((c, s)),
            });
        match best {
            Some((child, s)) if s > threshold => {
                path.push(child);
                node = Some(child);
            }
            _ => return path,
        }
    }
}

/// Pools the feature vectors of a mention's in-vocabulary features.
pub fn embed_unseen_mention<S: AsRef<str>>(
    mention: usize,
    features: &[S],
    vocab: &FeatureVocabulary,
    embeddings: &EmbeddingStore,
    pooling: Pooling,
) -> Result<Array1<f64>> {
    let mut sum = Array1::zeros(embeddings.dim());
    let mut n = 0usize;
    for f in features {
        if let Some(j) = vocab.get(f.as_ref()) {
            sum += &embeddings.features.row(j);
            n += 1;
        }
    }
    match (n, pooling) {
        (0, _) => Err(Error::Untypeable { mention }),
        (_, Pooling::Sum) => Ok(sum),
        (n, Pooling::Mean) => Ok(sum / n as f64),
    }
}

fn check_model(corpus: &LabeledCorpus, hierarchy: &TypeHierarchy, emb: &EmbeddingStore) -> Result<()> {
    if emb.num_mentions() != corpus.len() {
        return Err(Error::Mismatch(format!(
            "model has {} mentions, corpus has {}",
            emb.num_mentions(),
            corpus.len()
        )));
    }
    if emb.num_types() != hierarchy.len() {
        return Err(Error::Mismatch(format!(
            "model has {} types, hierarchy has {}",
            emb.num_types(),
            hierarchy.len()
        )));
    }
    Ok(())
}

/// Infers a type-path for every training mention from its learned vector.
pub fn infer_corpus(
    corpus: &LabeledCorpus,
    hierarchy: &TypeHierarchy,
    emb: &EmbeddingStore,
    config: &InferenceConfig,
) -> Result<Vec<Vec<TypeId>>> {
    check_model(corpus, hierarchy, emb)?;
    Ok(corpus
        .iter()
        .enumerate()
        .map(|(i, m)| infer_type_path(emb.mention(i), emb.types.view(), &m.candidates, hierarchy, config.threshold))
        .collect())
}

/// Infers type-paths for mentions that were not part of training, embedding
/// each through its features. Mentions without known features yield `None`
/// and are logged.
pub fn infer_unseen(
    corpus: &LabeledCorpus,
    hierarchy: &TypeHierarchy,
    vocab: &FeatureVocabulary,
    feature_config: &FeatureConfig,
    emb: &EmbeddingStore,
    config: &InferenceConfig,
) -> Result<Vec<Option<Vec<TypeId>>>> {
    if emb.num_types() != hierarchy.len() || emb.num_features() != vocab.len() {
        return Err(Error::Mismatch("model does not match hierarchy or vocabulary".into()));
    }
    Ok(corpus
        .iter()
        .map(|m: &Mention| {
            let feats = crate::features::extract_features(m, feature_config);
            match embed_unseen_mention(m.id, &feats, vocab, emb, config.unseen_pooling) {
                Ok(u) => Some(infer_type_path(
                    u.view(),
                    emb.types.view(),
                    &m.candidates,
                    hierarchy,
                    config.threshold,
                )),
                Err(e) => {
                    log::warn!("{e}");
                    None
                }
            }
        })
        .collect())
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenoiseReport {
    pub total: usize,
    /// Ids of mentions whose inferred path was empty.
    pub dropped: Vec<usize>,
}

/// Replaces each candidate set with its inferred path; mentions with an
/// empty path are dropped.
pub fn denoise_corpus(
    corpus: &LabeledCorpus,
    hierarchy: &TypeHierarchy,
    emb: &EmbeddingStore,
    config: &InferenceConfig,
) -> Result<(LabeledCorpus, DenoiseReport)> {
    let paths = infer_corpus(corpus, hierarchy, emb, config)?;
    Ok(apply_paths(corpus, &paths))
}

pub(crate) fn apply_paths(corpus: &LabeledCorpus, paths: &[Vec<TypeId>]) -> (LabeledCorpus, DenoiseReport) {
    let mut report = DenoiseReport {
        total: corpus.len(),
        dropped: Vec::new(),
    };
    let mut kept = Vec::with_capacity(corpus.len());
    for (m, path) in corpus.iter().zip(paths) {
        if path.is_empty() {
            report.dropped.push(m.id);
        } else {
            let mut m = m.clone();
            m.candidates = path.iter().copied().collect();
            kept.push(m);
        }
    }
    if !report.dropped.is_empty() {
        log::info!("denoising dropped {} of {} mentions", report.dropped.len(), report.total);
    }
    (LabeledCorpus::new(kept), report)
}

/// One round of [`retrain_loop`].
#[derive(Clone, Debug)]
pub struct RetrainRound {
    pub model: TrainedModel,
    /// The original corpus with inferred paths; empty paths are dropped.
    pub denoised: LabeledCorpus,
    pub report: DenoiseReport,
}

/// Trains, infers and retrains `rounds` times. Each round builds the
/// mention-type links from the previous round's paths (mentions whose path
/// came out empty keep their original candidates) and always infers within
/// the original candidate sets.
#[allow(clippy::too_many_arguments)]
pub fn retrain_loop(
    corpus: &LabeledCorpus,
    hierarchy: &TypeHierarchy,
    vocab: &FeatureVocabulary,
    feature_config: &FeatureConfig,
    correlation: TypeCorrelation<'_>,
    training: &TrainingConfig,
    inference: &InferenceConfig,
    rounds: usize,
) -> Result<Vec<RetrainRound>> {
    if rounds == 0 {
        return Err(Error::Config("retraining needs at least one round".into()));
    }
    inference.validate()?;
    let mut labels = corpus.clone();
    let mut out = Vec::with_capacity(rounds);
    for round in 1..=rounds {
        let graph = HeteroGraph::build(&labels, hierarchy, vocab, feature_config, correlation)?;
        let model = train(&graph, training)?;
        let paths = infer_corpus(corpus, hierarchy, &model.embeddings, inference)?;
        let (denoised, report) = apply_paths(corpus, &paths);
        log::info!("retraining round {round}: {} of {} mentions kept", denoised.len(), report.total);
        labels = corpus.clone();
        for (m, path) in labels.mentions.iter_mut().zip(&paths) {
            if !path.is_empty() {
                m.candidates = path.iter().copied().collect();
            }
        }
        out.push(RetrainRound { model, denoised, report });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::TokenRecord;
    use ndarray::{arr1, Array2};

    fn hierarchy() -> TypeHierarchy {
        TypeHierarchy::from_pairs(&[
            ("person", None),
            ("artist", Some("person")),
            ("actor", Some("artist")),
            ("politician", Some("person")),
            ("location", None),
        ])
        .unwrap()
    }

    /// One-dimensional type vectors so that the score equals the coordinate.
    fn types(scores: &[f64]) -> Array2<f64> {
        Array2::from_shape_vec((scores.len(), 1), scores.to_vec()).unwrap()
    }

    fn set(ids: &[usize]) -> TypeSet {
        ids.iter().map(|&i| TypeId(i)).collect()
    }

    #[test]
    fn hand_traced_path() {
        let h = hierarchy();
        let v = types(&[2.0, 0.9, 0.05, 1.5, 3.0]);
        let path = infer_type_path(arr1(&[1.0]).view(), v.view(), &set(&[0, 1, 2, 3]), &h, 0.1);
        assert_eq!(path, vec![TypeId(0), TypeId(3)]);
    }

    #[test]
    fn below_threshold_gives_empty_path() {
        let h = hierarchy();
        let v = types(&[0.1, 0.05, 0.0, -1.0, 0.0]);
        assert!(infer_type_path(arr1(&[1.0]).view(), v.view(), &set(&[0, 1, 2, 3]), &h, 0.1).is_empty());
    }

    #[test]
    fn single_chain() {
        let h = hierarchy();
        let v = types(&[0.5, 0.4, 0.0, 0.0, 0.0]);
        let path = infer_type_path(arr1(&[1.0]).view(), v.view(), &set(&[0, 1]), &h, 0.1);
        assert_eq!(path, vec![TypeId(0), TypeId(1)]);
    }

    #[test]
    fn ties_take_smallest_id() {
        let h = hierarchy();
        let v = types(&[1.0, 0.7, 0.0, 0.7, 1.0]);
        let path = infer_type_path(arr1(&[1.0]).view(), v.view(), &set(&[0, 1, 3, 4]), &h, 0.1);
        assert_eq!(path, vec![TypeId(0), TypeId(1)]);
    }

    #[test]
    fn unseen_mean_pooling() {
        let mut emb = EmbeddingStore::zeros(0, 3, 1, 2);
        emb.features.row_mut(0).assign(&arr1(&[1.0, -2.0]));
        emb.features.row_mut(1).assign(&arr1(&[-1.0, 2.0]));
        emb.features.row_mut(2).assign(&arr1(&[4.0, 6.0]));
        let vocab = FeatureVocabulary::parse_tsv("0\tA\t2\n1\tB\t2\n2\tC\t2\n", std::path::Path::new("f")).unwrap();

        let one = embed_unseen_mention(7, &["A", "zzz"], &vocab, &emb, Pooling::Mean).unwrap();
        assert_eq!(one, arr1(&[1.0, -2.0]));
        let cancel = embed_unseen_mention(7, &["A", "B"], &vocab, &emb, Pooling::Mean).unwrap();
        assert_eq!(cancel, arr1(&[0.0, 0.0]));
        let three = embed_unseen_mention(7, &["A", "B", "C"], &vocab, &emb, Pooling::Mean).unwrap();
        assert_eq!(three, arr1(&[4.0 / 3.0, 2.0]));
        let summed = embed_unseen_mention(7, &["A", "C"], &vocab, &emb, Pooling::Sum).unwrap();
        assert_eq!(summed, arr1(&[5.0, 4.0]));
        assert!(matches!(
            embed_unseen_mention(7, &["nope"], &vocab, &emb, Pooling::Mean),
            Err(Error::Untypeable { mention: 7 })
        ));
    }

    fn corpus(cands: &[&[usize]]) -> LabeledCorpus {
        LabeledCorpus::new(
            cands
                .iter()
                .enumerate()
                .map(|(i, c)| Mention::from_tokens(i, vec![TokenRecord::new("x")], set(c)))
                .collect(),
        )
    }

    #[test]
    fn denoise_replaces_and_drops() {
        let h = hierarchy();
        let c = corpus(&[&[0, 1, 2, 3], &[0, 1], &[4]]);
        let mut emb = EmbeddingStore::zeros(3, 0, 5, 1);
        emb.types.assign(&types(&[2.0, 0.9, 0.05, 1.5, 0.2]));
        emb.mentions.assign(&types(&[1.0, 1.0, 0.0]));
        let (out, report) = denoise_corpus(&c, &h, &emb, &InferenceConfig::default()).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out.mentions[0].candidates, set(&[0, 3]));
        // A single correct path is left intact.
        assert_eq!(out.mentions[1].candidates, set(&[0, 1]));
        assert_eq!(report.dropped, vec![2]);
    }

    #[test]
    fn retraining_infers_within_original_candidates() {
        use crate::synthetic::{generate, SyntheticConfig};
        let synth = SyntheticConfig {
            mentions: 120,
            entities: 40,
            ..Default::default()
        };
        let data = generate(&synth).unwrap();
        let fc = synth.feature_config();
        let vocab = FeatureVocabulary::build(&data.corpus, &fc).unwrap();
        let training = TrainingConfig {
            dim: 8,
            max_iters: 5,
            ..Default::default()
        };
        let rounds = retrain_loop(
            &data.corpus,
            &data.hierarchy,
            &vocab,
            &fc,
            TypeCorrelation::Hierarchy,
            &training,
            &InferenceConfig::default(),
            3,
        )
        .unwrap();
        assert_eq!(rounds.len(), 3);
        for r in &rounds {
            assert_eq!(r.report.total, 120);
            for m in r.denoised.iter() {
                let original = &data.corpus.mentions[m.id];
                assert!(m.candidates.is_subset(&original.candidates));
                assert!(data.hierarchy.is_path(&m.candidates));
            }
        }
        let first = train(
            &HeteroGraph::build(&data.corpus, &data.hierarchy, &vocab, &fc, TypeCorrelation::Hierarchy).unwrap(),
            &training,
        )
        .unwrap();
        assert_eq!(first.embeddings, rounds[0].model.embeddings);
        assert!(matches!(
            retrain_loop(
                &data.corpus,
                &data.hierarchy,
                &vocab,
                &fc,
                TypeCorrelation::None,
                &training,
                &InferenceConfig::default(),
                0
            ),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn mismatched_model_is_rejected() {
        let h = hierarchy();
        let c = corpus(&[&[0]]);
        let emb = EmbeddingStore::zeros(2, 0, 5, 1);
        assert!(matches!(
            denoise_corpus(&c, &h, &emb, &InferenceConfig::default()),
            Err(Error::Mismatch(_))
        ));
    }
}

//! Heuristic label-pruning baselines and corpus noise statistics.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{LabeledCorpus, Mention};
use crate::error::{Error, Result};
use crate::hierarchy::{TypeHierarchy, TypeId, TypeSet};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SiblingPolicy {
    /// Delete every member of a sibling group, with its descendants.
    #[default]
    DeleteAll,
    /// Keep the smallest-id member of each sibling group and continue below it.
    KeepFirst,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PruneMethod {
    Sib,
    Min,
    All,
}

impl std::str::FromStr for PruneMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sib" => Ok(PruneMethod::Sib),
            "min" => Ok(PruneMethod::Min),
            "all" => Ok(PruneMethod::All),
            other => Err(Error::Config(format!("unknown pruning method `{other}`"))),
        }
    }
}

fn prune_siblings(candidates: &TypeSet, hierarchy: &TypeHierarchy, policy: SiblingPolicy) -> TypeSet {
    let mut kept = TypeSet::new();
    let mut frontier = vec![None];
    while let Some(node) = frontier.pop() {
        let children: Vec<TypeId> = hierarchy
            .children(node)
            .iter()
            .copied()
            .filter(|c| candidates.contains(c))
            .collect();
        let survivors = match (children.len(), policy) {
            (0 | 1, _) => &children[..],
            (_, SiblingPolicy::DeleteAll) => &[][..],
            (_, SiblingPolicy::KeepFirst) => &children[..1],
        };
        for &c in survivors {
            kept.insert(c);
            frontier.push(Some(c));
        }
    }
    kept
}

fn retain_nonempty(corpus: &LabeledCorpus, mut f: impl FnMut(&Mention) -> TypeSet) -> LabeledCorpus {
    LabeledCorpus::new(
        corpus
            .iter()
            .filter_map(|m| {
                let candidates = f(m);
                (!candidates.is_empty()).then(|| {
                    let mut m = m.clone();
                    m.candidates = candidates;
                    m
                })
            })
            .collect(),
    )
}

/// Removes every group of two or more sibling candidates (the root counts as
/// a parent) together with their descendants; emptied mentions are dropped.
pub fn sib_prune(corpus: &LabeledCorpus, hierarchy: &TypeHierarchy) -> LabeledCorpus {
    sib_prune_with(corpus, hierarchy, SiblingPolicy::DeleteAll)
}

pub fn sib_prune_with(corpus: &LabeledCorpus, hierarchy: &TypeHierarchy, policy: SiblingPolicy) -> LabeledCorpus {
    retain_nonempty(corpus, |m| prune_siblings(&m.candidates, hierarchy, policy))
}

/// Within each document, removes types carried by only one mention; emptied
/// mentions are dropped.
pub fn min_prune(corpus: &LabeledCorpus) -> Result<LabeledCorpus> {
    let mut counts: HashMap<&str, BTreeMap<TypeId, usize>> = HashMap::new();
    for m in corpus.iter() {
        let doc = m
            .doc_id
            .as_deref()
            .ok_or(Error::MissingDocument { mention: m.id })?;
        let per_doc = counts.entry(doc).or_default();
        for &t in &m.candidates {
            *per_doc.entry(t).or_default() += 1;
        }
    }
    Ok(retain_nonempty(corpus, |m| {
        let per_doc = &counts[m.doc_id.as_deref().expect("checked above")];
        m.candidates.iter().copied().filter(|t| per_doc[t] >= 2).collect()
    }))
}

/// Sib pruning followed by Min pruning.
pub fn all_prune(corpus: &LabeledCorpus, hierarchy: &TypeHierarchy) -> Result<LabeledCorpus> {
    min_prune(&sib_prune(corpus, hierarchy))
}

pub fn prune(corpus: &LabeledCorpus, hierarchy: &TypeHierarchy, method: PruneMethod) -> Result<LabeledCorpus> {
    match method {
        PruneMethod::Sib => Ok(sib_prune(corpus, hierarchy)),
        PruneMethod::Min => min_prune(corpus),
        PruneMethod::All => all_prune(corpus, hierarchy),
    }
}

/// Replaces each candidate set with one of its root-to-leaf paths, chosen by
/// descending from the root through uniformly drawn candidate children.
pub fn random_candidate_paths(corpus: &LabeledCorpus, hierarchy: &TypeHierarchy, seed: u64) -> LabeledCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    retain_nonempty(corpus, |m| {
        let mut path = TypeSet::new();
        let mut node = None;
        loop {
            let children: Vec<TypeId> = hierarchy
                .children(node)
                .iter()
                .copied()
                .filter(|c| m.candidates.contains(c))
                .collect();
            match children.choose(&mut rng) {
                Some(&c) => {
                    path.insert(c);
                    node = Some(c);
                }
                None => return path,
            }
        }
    })
}

/// Whether some parent (or the root) has two or more children among `types`.
pub fn has_sibling_types(types: &TypeSet, hierarchy: &TypeHierarchy) -> bool {
    let mut parents = BTreeMap::new();
    types.iter().any(|&t| {
        let n = parents.entry(hierarchy.parent(t)).or_insert(0usize);
        *n += 1;
        *n >= 2
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseStats {
    pub mentions: usize,
    /// Percentage of mentions whose candidates include two sibling types.
    pub sibling_noise_pct: f64,
    pub sib_deleted_pct: f64,
    /// `None` when the corpus lacks document ids.
    pub min_deleted_pct: Option<f64>,
    pub all_deleted_pct: Option<f64>,
}

fn pct(part: usize, whole: usize) -> f64 {
    if whole == 0 {
        0.0
    } else {
        100.0 * part as f64 / whole as f64
    }
}

pub fn noise_stats(corpus: &LabeledCorpus, hierarchy: &TypeHierarchy) -> NoiseStats {
    let n = corpus.len();
    let noisy = corpus
        .iter()
        .filter(|m| has_sibling_types(&m.candidates, hierarchy))
        .count();
    let deleted = |kept: usize| pct(n - kept, n);
    let (min, all) = match (min_prune(corpus), all_prune(corpus, hierarchy)) {
        (Ok(min), Ok(all)) => (Some(deleted(min.len())), Some(deleted(all.len()))),
        _ => {
            log::warn!("corpus lacks document ids; Min and All statistics skipped");
            (None, None)
        }
    };
    NoiseStats {
        mentions: n,
        sibling_noise_pct: pct(noisy, n),
        sib_deleted_pct: deleted(sib_prune(corpus, hierarchy).len()),
        min_deleted_pct: min,
        all_deleted_pct: all,
    }
}

impl NoiseStats {
    pub fn to_table(&self) -> String {
        let opt = |x: Option<f64>| x.map_or_else(|| "n/a".to_string(), |v| format!("{v:.2}%"));
        format!(
            "{:<34}{:>10}\n{:<34}{:>10}\n{:<34}{:>10}\n{:<34}{:>10}\n{:<34}{:>10}\n",
            "mentions",
            self.mentions,
            "mentions with sibling types",
            format!("{:.2}%", self.sibling_noise_pct),
            "deleted by Sib",
            format!("{:.2}%", self.sib_deleted_pct),
            "deleted by Min",
            opt(self.min_deleted_pct),
            "deleted by All",
            opt(self.all_deleted_pct),
        )
    }
}

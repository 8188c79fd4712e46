//! The heterogeneous graph: mention-type (`G_MY`), mention-feature (`G_MF`)
//! and type-type (`G_YY`) link sets.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::LabeledCorpus;
use crate::error::{Error, Result};
use crate::features::{FeatureConfig, FeatureVocabulary};
use crate::hierarchy::{TypeHierarchy, TypeId};
use crate::kb::KbFacts;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Link {
    pub src: usize,
    pub dst: usize,
    pub weight: f64,
}

impl Link {
    pub fn new(src: usize, dst: usize, weight: f64) -> Self {
        Link { src, dst, weight }
    }
}

/// Which type correlation subgraph a model uses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// KB entity-overlap correlation.
    #[default]
    #[serde(rename = "ple")]
    Ple,
    /// Hierarchy shortest-path correlation.
    #[serde(rename = "ple-coh")]
    PleCoh,
    /// No type correlation subgraph.
    #[serde(rename = "ple-noco")]
    PleNoCo,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Ple, Variant::PleCoh, Variant::PleNoCo];
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Ple => "ple",
            Variant::PleCoh => "ple-coh",
            Variant::PleNoCo => "ple-noco",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ple" => Ok(Variant::Ple),
            "ple-coh" | "coh" => Ok(Variant::PleCoh),
            "ple-noco" | "noco" => Ok(Variant::PleNoCo),
            other => Err(Error::Config(format!("unknown variant `{other}`"))),
        }
    }
}

/// Source of the type-type links.
#[derive(Clone, Copy, Debug)]
pub enum TypeCorrelation<'a> {
    Kb(&'a KbFacts),
    Hierarchy,
    None,
}

/// One binary link per (mention, candidate type).
pub fn build_mention_type_graph(corpus: &LabeledCorpus) -> Vec<Link> {
    corpus
        .iter()
        .enumerate()
        .flat_map(|(i, m)| m.candidates.iter().map(move |t| Link::new(i, t.0, 1.0)))
        .collect()
}

/// One binary link per distinct in-vocabulary feature of each mention.
pub fn build_mention_feature_graph(
    corpus: &LabeledCorpus,
    vocab: &FeatureVocabulary,
    config: &FeatureConfig,
) -> Vec<Link> {
    let mut links = Vec::new();
    let mut featureless = 0usize;
    for (i, m) in corpus.iter().enumerate() {
        let ids = vocab.mention_features(m, config);
        if ids.is_empty() {
            featureless += 1;
        }
        links.extend(ids.into_iter().map(|j| Link::new(i, j, 1.0)));
    }
    if featureless > 0 {
        log::warn!("{featureless} mentions have no in-vocabulary features; they train through G_MY only");
    }
    links
}

/// `w = 1 / (1 + ρ)` for every type pair joined by a tree path that avoids the synthetic root.
pub fn build_hierarchy_correlation(hierarchy: &TypeHierarchy) -> Vec<Link> {
    let k = hierarchy.len();
    let mut links = Vec::new();
    for a in 0..k {
        for b in a + 1..k {
            if let Some(rho) = hierarchy.tree_distance(TypeId(a), TypeId(b)) {
                links.push(Link::new(a, b, 1.0 / (1.0 + rho as f64)));
            }
        }
    }
    links
}

/// Entity-overlap correlation:
/// `w = (|E_k ∩ E_k'| / |E_k| + |E_k ∩ E_k'| / |E_k'|) / 2`, zero-overlap pairs omitted.
pub fn build_kb_correlation(kb: &KbFacts, hierarchy: &TypeHierarchy) -> Vec<Link> {
    let k = hierarchy.len();
    let sets = kb.entity_sets(k);
    let isolated: Vec<&str> = hierarchy
        .ids()
        .filter(|t| sets[t.0].is_empty())
        .map(|t| hierarchy.name(t))
        .collect();
    if !isolated.is_empty() {
        log::warn!("types without KB entities get no correlation links: {}", isolated.join(", "));
    }
    let mut links = Vec::new();
    for a in 0..k {
        if sets[a].is_empty() {
            continue;
        }
        for b in a + 1..k {
            if sets[b].is_empty() {
                continue;
            }
            let shared = sets[a].intersection(&sets[b]).count();
            if shared == 0 {
                continue;
            }
            let s = shared as f64;
            let w = (s / sets[a].len() as f64 + s / sets[b].len() as f64) / 2.0;
            links.push(Link::new(a, b, w));
        }
    }
    links
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeteroGraph {
    num_mentions: usize,
    num_features: usize,
    num_types: usize,
    mention_type: Vec<Link>,
    mention_feature: Vec<Link>,
    type_type: Vec<Link>,
    candidates: Vec<Vec<usize>>,
}

impl HeteroGraph {
    /// Validates and assembles the three link sets. Type-type links are
    /// normalized to `src < dst`.
    pub fn new(
        num_mentions: usize,
        num_features: usize,
        num_types: usize,
        mention_type: Vec<Link>,
        mention_feature: Vec<Link>,
        mut type_type: Vec<Link>,
    ) -> Result<Self> {
        let bad = |m: String| Err(Error::Config(m));

        let mut candidates = vec![Vec::new(); num_mentions];
        let mut seen = BTreeSet::new();
        for l in &mention_type {
            if l.src >= num_mentions || l.dst >= num_types {
                return bad(format!("G_MY link ({}, {}) out of range", l.src, l.dst));
            }
            if !seen.insert((l.src, l.dst)) {
                return bad(format!("duplicate G_MY link ({}, {})", l.src, l.dst));
            }
            candidates[l.src].push(l.dst);
        }
        for (i, c) in candidates.iter_mut().enumerate() {
            if c.is_empty() {
                return Err(Error::EmptyCandidates { mention: i });
            }
            c.sort_unstable();
        }

        seen.clear();
        for l in &mention_feature {
            if l.src >= num_mentions || l.dst >= num_features {
                return bad(format!("G_MF link ({}, {}) out of range", l.src, l.dst));
            }
            if !seen.insert((l.src, l.dst)) {
                return bad(format!("duplicate G_MF link ({}, {})", l.src, l.dst));
            }
        }

        seen.clear();
        for l in type_type.iter_mut() {
            if l.src == l.dst {
                return bad(format!("G_YY self-loop on type {}", l.src));
            }
            if l.src >= num_types || l.dst >= num_types {
                return bad(format!("G_YY link ({}, {}) out of range", l.src, l.dst));
            }
            if !(l.weight > 0.0 && l.weight <= 1.0) {
                return bad(format!("G_YY weight {} outside (0, 1]", l.weight));
            }
            if l.src > l.dst {
                std::mem::swap(&mut l.src, &mut l.dst);
            }
            if !seen.insert((l.src, l.dst)) {
                return bad(format!("duplicate G_YY link ({}, {})", l.src, l.dst));
            }
        }

        Ok(HeteroGraph {
            num_mentions,
            num_features,
            num_types,
            mention_type,
            mention_feature,
            type_type,
            candidates,
        })
    }

    pub fn build(
        corpus: &LabeledCorpus,
        hierarchy: &TypeHierarchy,
        vocab: &FeatureVocabulary,
        feature_config: &FeatureConfig,
        correlation: TypeCorrelation<'_>,
    ) -> Result<Self> {
        let my = build_mention_type_graph(corpus);
        let mf = build_mention_feature_graph(corpus, vocab, feature_config);
        let yy = match correlation {
            TypeCorrelation::Kb(kb) => build_kb_correlation(kb, hierarchy),
            TypeCorrelation::Hierarchy => build_hierarchy_correlation(hierarchy),
            TypeCorrelation::None => Vec::new(),
        };
        let g = Self::new(corpus.len(), vocab.len(), hierarchy.len(), my, mf, yy)?;
        log::info!(
            "graph: N={} M={} K={} |G_MY|={} |G_MF|={} |G_YY|={}",
            g.num_mentions,
            g.num_features,
            g.num_types,
            g.mention_type.len(),
            g.mention_feature.len(),
            g.type_type.len()
        );
        Ok(g)
    }

    pub fn num_mentions(&self) -> usize {
        self.num_mentions
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn num_types(&self) -> usize {
        self.num_types
    }

    pub fn mention_type_links(&self) -> &[Link] {
        &self.mention_type
    }

    pub fn mention_feature_links(&self) -> &[Link] {
        &self.mention_feature
    }

    pub fn type_type_links(&self) -> &[Link] {
        &self.type_type
    }

    /// Candidate type ids of mention `i`, ascending.
    pub fn candidates(&self, i: usize) -> &[usize] {
        &self.candidates[i]
    }

    /// Total link count `E`.
    pub fn num_links(&self) -> usize {
        self.mention_type.len() + self.mention_feature.len() + self.type_type.len()
    }

    pub fn feature_degrees(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.num_features];
        for l in &self.mention_feature {
            d[l.dst] += 1.0;
        }
        d
    }

    /// Link counts of each type in `G_YY`.
    pub fn type_degrees(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.num_types];
        for l in &self.type_type {
            d[l.src] += 1.0;
            d[l.dst] += 1.0;
        }
        d
    }

    /// Same graph with `G_YY` removed.
    pub fn without_type_links(&self) -> Self {
        HeteroGraph {
            type_type: Vec::new(),
            ..self.clone()
        }
    }

    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, links) in [
            ("g_my.tsv", &self.mention_type),
            ("g_mf.tsv", &self.mention_feature),
            ("g_yy.tsv", &self.type_type),
        ] {
            let path = dir.join(name);
            fs::write(&path, links_to_tsv(links)).map_err(|e| Error::io(&path, e))?;
        }
        let meta = GraphMeta {
            mentions: self.num_mentions,
            features: self.num_features,
            types: self.num_types,
        };
        let path = dir.join(GRAPH_META);
        fs::write(&path, serde_json::to_string_pretty(&meta).expect("serializable") + "\n")
            .map_err(|e| Error::io(&path, e))
    }

    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let meta_path = dir.join(GRAPH_META);
        let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let meta: GraphMeta =
            serde_json::from_str(&text).map_err(|e| Error::parse(&meta_path, e.line(), e.to_string()))?;
        let read = |name: &str| -> Result<Vec<Link>> {
            let path = dir.join(name);
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            links_from_tsv(&text, &path)
        };
        Self::new(
            meta.mentions,
            meta.features,
            meta.types,
            read("g_my.tsv")?,
            read("g_mf.tsv")?,
            read("g_yy.tsv")?,
        )
    }
}

const GRAPH_META: &str = "graph_meta.json";

#[derive(Serialize, Deserialize)]
struct GraphMeta {
    mentions: usize,
    features: usize,
    types: usize,
}

/// Formats `x` like C's `%.{digits}g`.
pub fn format_significant(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if exp < -4 || exp >= digits as i32 {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn links_to_tsv(links: &[Link]) -> String {
    let mut out = String::new();
    for l in links {
        out.push_str(&format!("{}\t{}\t{}\n", l.src, l.dst, format_significant(l.weight, 12)));
    }
    out
}

fn links_from_tsv(text: &str, path: &Path) -> Result<Vec<Link>> {
    let mut links = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let parsed = match fields.as_slice() {
            [s, d, w] => s
                .parse()
                .ok()
                .zip(d.parse().ok())
                .zip(w.parse::<f64>().ok())
                .map(|((s, d), w)| Link::new(s, d, w)),
            _ => None,
        };
        links.push(parsed.ok_or_else(|| Error::parse(path, lineno + 1, "expected `src<TAB>dst<TAB>weight`"))?);
    }
    Ok(links)
}

//! Text features for mentions and the frequency-filtered feature vocabulary.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{LabeledCorpus, Mention};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureFamily {
    Head,
    Token,
    Pos,
    Character,
    Shape,
    Length,
    Context,
    Brown,
    Dependency,
}

impl FeatureFamily {
    pub const ALL: [FeatureFamily; 9] = [
        FeatureFamily::Head,
        FeatureFamily::Token,
        FeatureFamily::Pos,
        FeatureFamily::Character,
        FeatureFamily::Shape,
        FeatureFamily::Length,
        FeatureFamily::Context,
        FeatureFamily::Brown,
        FeatureFamily::Dependency,
    ];

    pub fn prefixes(self) -> &'static [&'static str] {
        match self {
            FeatureFamily::Head => &["HEAD_"],
            FeatureFamily::Token => &["TKN_"],
            FeatureFamily::Pos => &["POS_"],
            FeatureFamily::Character => &["TRI_"],
            FeatureFamily::Shape => &["SHAPE_"],
            FeatureFamily::Length => &["LEN_"],
            FeatureFamily::Context => &["CXT_B:", "CXT_A:"],
            FeatureFamily::Brown => &["BROWN_"],
            FeatureFamily::Dependency => &["GOV:"],
        }
    }

    /// The family whose prefix `feature` carries.
    pub fn of(feature: &str) -> Option<FeatureFamily> {
        Self::ALL
            .into_iter()
            .find(|f| f.prefixes().iter().any(|p| feature.starts_with(p)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    /// Context words taken on each side of the mention.
    pub context_window: usize,
    pub brown_prefix_lengths: Vec<usize>,
    pub min_count: u64,
    pub enabled_families: BTreeSet<FeatureFamily>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            context_window: 3,
            brown_prefix_lengths: vec![4, 8, 12],
            min_count: 2,
            enabled_families: FeatureFamily::ALL.into_iter().collect(),
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.brown_prefix_lengths.contains(&0) {
            return Err(Error::Config("brown prefix lengths must be positive".into()));
        }
        Ok(())
    }

    fn enabled(&self, family: FeatureFamily) -> bool {
        self.enabled_families.contains(&family)
    }
}

/// Maps uppercase to `A`, lowercase to `a`, digits to `0`, anything else to
/// `-`, then collapses runs of the same symbol.
pub fn word_shape(token: &str) -> String {
    let mut shape = String::new();
    for c in token.chars() {
        let s = if c.is_uppercase() {
            'A'
        } else if c.is_lowercase() {
            'a'
        } else if c.is_ascii_digit() {
            '0'
        } else {
            '-'
        };
        if !shape.ends_with(s) {
            shape.push(s);
        }
    }
    shape
}

/// All 3-grams of `":" + lowercase(head) + ":"`.
pub fn char_trigrams(head: &str) -> Vec<String> {
    let padded: Vec<char> = std::iter::once(':')
        .chain(head.to_lowercase().chars())
        .chain(std::iter::once(':'))
        .collect();
    padded.windows(3).map(|w| w.iter().collect()).collect()
}

fn push_context(out: &mut Vec<String>, prefix: &str, words: &[&str]) {
    for w in words {
        out.push(format!("{prefix}{w}"));
    }
    for pair in words.windows(2) {
        out.push(format!("{prefix}{} {}", pair[0], pair[1]));
    }
}

/// Extracts the prefixed feature strings of one mention. Families whose
/// annotation is missing contribute nothing.
pub fn extract_features(mention: &Mention, config: &FeatureConfig) -> Vec<String> {
    let tokens = mention.tokens();
    let head = mention.head_token();
    let mut out = Vec::new();

    if config.enabled(FeatureFamily::Head) {
        out.push(format!("HEAD_{}", head.text));
    }
    if config.enabled(FeatureFamily::Token) {
        out.extend(tokens.iter().map(|t| format!("TKN_{}", t.text)));
    }
    if config.enabled(FeatureFamily::Pos) {
        out.extend(tokens.iter().filter_map(|t| t.pos.as_ref()).map(|p| format!("POS_{p}")));
    }
    if config.enabled(FeatureFamily::Character) {
        out.extend(char_trigrams(&head.text).into_iter().map(|t| format!("TRI_{t}")));
    }
    if config.enabled(FeatureFamily::Shape) {
        out.extend(tokens.iter().map(|t| format!("SHAPE_{}", word_shape(&t.text))));
    }
    if config.enabled(FeatureFamily::Length) {
        let n = tokens.len();
        out.push(if n > 10 { "LEN_10+".to_string() } else { format!("LEN_{n}") });
    }
    if config.enabled(FeatureFamily::Context) {
        let ctx = &mention.context;
        let before_start = mention.span.start.saturating_sub(config.context_window);
        let after_end = (mention.span.end + config.context_window).min(ctx.len());
        let before: Vec<&str> = ctx[before_start..mention.span.start].iter().map(|t| t.text.as_str()).collect();
        let after: Vec<&str> = ctx[mention.span.end..after_end].iter().map(|t| t.text.as_str()).collect();
        push_context(&mut out, "CXT_B:", &before);
        push_context(&mut out, "CXT_A:", &after);
    }
    if config.enabled(FeatureFamily::Brown) {
        if let Some(bits) = &head.brown_path {
            for &p in &config.brown_prefix_lengths {
                if p <= bits.len() {
                    out.push(format!("BROWN_{p}_{}", &bits[..p]));
                }
            }
        }
    }
    if config.enabled(FeatureFamily::Dependency) {
        if let Some(rel) = &head.dep_label {
            out.push(format!("GOV:{rel}"));
            if let Some(gov) = head.dep_governor.and_then(|g| mention.context.get(g)) {
                out.push(format!("GOV:{}", gov.text.to_lowercase()));
            }
        }
    }
    out
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FeatureVocabulary {
    strings: Vec<String>,
    index: HashMap<String, usize>,
    counts: Vec<u64>,
}

impl FeatureVocabulary {
    /// Counts every feature occurrence in the corpus and keeps those seen at
    /// least `min_count` times. Ids follow lexicographic order.
    pub fn build(corpus: &LabeledCorpus, config: &FeatureConfig) -> Result<Self> {
        let mut counts: BTreeMap<String, u64> = BTreeMap::new();
        for m in corpus.iter() {
            for f in extract_features(m, config) {
                *counts.entry(f).or_default() += 1;
            }
        }
        let vocab = Self::from_counts(counts.into_iter().filter(|(_, c)| *c >= config.min_count));
        if vocab.is_empty() {
            return Err(Error::EmptyVocabulary {
                min_count: config.min_count,
            });
        }
        log::info!("feature vocabulary: {} features", vocab.len());
        Ok(vocab)
    }

    fn from_counts(entries: impl IntoIterator<Item = (String, u64)>) -> Self {
        let mut vocab = FeatureVocabulary::default();
        for (s, c) in entries {
            vocab.index.insert(s.clone(), vocab.strings.len());
            vocab.strings.push(s);
            vocab.counts.push(c);
        }
        vocab
    }

    pub fn len(&self) -> usize {
        self.strings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strings.is_empty()
    }

    pub fn get(&self, feature: &str) -> Option<usize> {
        self.index.get(feature).copied()
    }

    pub fn feature(&self, id: usize) -> &str {
        &self.strings[id]
    }

    pub fn count(&self, id: usize) -> u64 {
        self.counts[id]
    }

    pub fn contains(&self, feature: &str) -> bool {
        self.index.contains_key(feature)
    }

    /// Distinct in-vocabulary feature ids of a mention, ascending.
    pub fn mention_features(&self, mention: &Mention, config: &FeatureConfig) -> Vec<usize> {
        let ids: BTreeSet<usize> = extract_features(mention, config)
            .iter()
            .filter_map(|f| self.get(f))
            .collect();
        ids.into_iter().collect()
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (i, (s, c)) in self.strings.iter().zip(&self.counts).enumerate() {
            out.push_str(&format!("{i}\t{s}\t{c}\n"));
        }
        out
    }

    pub fn write_tsv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        w.write_all(self.to_tsv().as_bytes()).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads a `feature_id<TAB>feature<TAB>count` dump; ids must be dense and in order.
    pub fn parse_tsv(text: &str, path: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let mut fields = line.splitn(3, '\t');
            let (Some(id), Some(s), Some(c)) = (fields.next(), fields.next(), fields.next()) else {
                return Err(Error::parse(path, lineno + 1, "expected `id<TAB>feature<TAB>count`"));
            };
            let id: usize = id
                .parse()
                .map_err(|_| Error::parse(path, lineno + 1, "bad feature id"))?;
            if id != entries.len() {
                return Err(Error::parse(path, lineno + 1, "feature ids must be dense and ascending"));
            }
            let c: u64 = c
                .parse()
                .map_err(|_| Error::parse(path, lineno + 1, "bad feature count"))?;
            entries.push((s.to_string(), c));
        }
        let vocab = Self::from_counts(entries);
        if vocab.index.len() != vocab.strings.len() {
            return Err(Error::parse(path, 0, "duplicate feature strings"));
        }
        Ok(vocab)
    }

    pub fn load_tsv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_tsv(&text, path)
    }
}

//! Distantly labeled mention corpus and its line-delimited JSON format.
//!
//! Each line holds one mention:
//!
//! ```json
//! {"id": 7, "doc": "d1", "entity": "m.0abc", "sentence": ["He", "met", "Trump", "."],
//!  "start": 2, "tokens": ["Trump"], "head": 0,
//!  "pos": ["PRP", "VBD", "NNP", "."], "dep": [null, null, {"rel": "dobj", "gov": 1}, null],
//!  "brown": [null, null, "1101", null],
//!  "candidates": ["person", "politician"], "gold": ["person", "politician"]}
//! ```
//!
//! `pos`, `dep` and `brown` are aligned with `sentence` (or with `tokens` when
//! no sentence is given). Only `tokens` and `candidates` are required.

use std::collections::{BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::{TypeHierarchy, TypeSet};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dependency {
    pub rel: String,
    #[serde(default)]
    pub gov: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenRecord {
    pub text: String,
    pub pos: Option<String>,
    pub dep_label: Option<String>,
    /// Sentence position of the governor; `None` for the root or when unparsed.
    pub dep_governor: Option<usize>,
    pub brown_path: Option<String>,
}

impl TokenRecord {
    pub fn new(text: impl Into<String>) -> Self {
        TokenRecord {
            text: text.into(),
            pos: None,
            dep_label: None,
            dep_governor: None,
            brown_path: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mention {
    pub id: usize,
    pub entity_id: Option<String>,
    pub doc_id: Option<String>,
    pub sentence_id: Option<String>,
    /// The enclosing sentence; the mention occupies `span`.
    pub context: Vec<TokenRecord>,
    pub span: Range<usize>,
    /// Index into the mention tokens, when a parse supplied one.
    pub head: Option<usize>,
    pub candidates: TypeSet,
    pub gold: Option<TypeSet>,
    /// Whether `context` came from an explicit `sentence` field.
    has_sentence: bool,
}

impl Mention {
    pub fn tokens(&self) -> &[TokenRecord] {
        &self.context[self.span.clone()]
    }

    /// Head position inside the mention; the last token unless a parse says otherwise.
    pub fn head_index(&self) -> usize {
        self.head.unwrap_or(self.span.len() - 1)
    }

    pub fn head_token(&self) -> &TokenRecord {
        &self.tokens()[self.head_index()]
    }

    /// Builds a mention whose sentence is just its own tokens.
    pub fn from_tokens(id: usize, tokens: Vec<TokenRecord>, candidates: TypeSet) -> Self {
        let span = 0..tokens.len();
        Mention {
            id,
            entity_id: None,
            doc_id: None,
            sentence_id: None,
            context: tokens,
            span,
            head: None,
            candidates,
            gold: None,
            has_sentence: false,
        }
    }

    /// Builds a mention embedded in a sentence.
    pub fn in_sentence(
        id: usize,
        sentence: Vec<TokenRecord>,
        span: Range<usize>,
        candidates: TypeSet,
    ) -> Self {
        Mention {
            id,
            entity_id: None,
            doc_id: None,
            sentence_id: None,
            context: sentence,
            span,
            head: None,
            candidates,
            gold: None,
            has_sentence: true,
        }
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.span.is_empty() {
            return Err("mention has no tokens".into());
        }
        if self.span.end > self.context.len() {
            return Err("mention span exceeds its sentence".into());
        }
        if let Some(h) = self.head {
            if h >= self.span.len() {
                return Err(format!("head index {h} outside mention of {} tokens", self.span.len()));
            }
        }
        for t in &self.context {
            if t.text.is_empty() {
                return Err("empty token".into());
            }
            if let Some(b) = &t.brown_path {
                if !b.chars().all(|c| c == '0' || c == '1') {
                    return Err(format!("brown path `{b}` is not a bit string"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LabeledCorpus {
    pub mentions: Vec<Mention>,
}

impl LabeledCorpus {
    pub fn new(mentions: Vec<Mention>) -> Self {
        LabeledCorpus { mentions }
    }

    pub fn len(&self) -> usize {
        self.mentions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mentions.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Mention> {
        self.mentions.iter()
    }

    pub fn has_gold(&self) -> bool {
        !self.mentions.is_empty() && self.mentions.iter().all(|m| m.gold.is_some())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LoadOptions {
    /// Add every ancestor of each listed candidate (and gold) type.
    pub close_ancestors: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            close_ancestors: true,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct MentionLine {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    doc: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sentence_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    entity: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sentence: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    start: Option<usize>,
    tokens: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    head: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pos: Option<Vec<Option<String>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dep: Option<Vec<Option<Dependency>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    brown: Option<Vec<Option<String>>>,
    candidates: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gold: Option<Vec<String>>,
}

fn resolve_types(
    names: &[String],
    hierarchy: &TypeHierarchy,
    options: LoadOptions,
) -> Result<TypeSet> {
    let set = names
        .iter()
        .map(|n| hierarchy.resolve(n))
        .collect::<Result<TypeSet>>()?;
    Ok(if options.close_ancestors {
        hierarchy.ancestor_closure(&set)
    } else {
        set
    })
}

fn aligned<T: Clone>(field: &Option<Vec<Option<T>>>, len: usize, name: &str) -> std::result::Result<Vec<Option<T>>, String> {
    match field {
        None => Ok(vec![None; len]),
        Some(v) if v.len() == len => Ok(v.clone()),
        Some(v) => Err(format!("`{name}` has {} entries for {len} sentence tokens", v.len())),
    }
}

fn mention_from_line(
    line: MentionLine,
    default_id: usize,
    hierarchy: &TypeHierarchy,
    options: LoadOptions,
) -> std::result::Result<Mention, Error> {
    let id = line.id.unwrap_or(default_id);
    let msg = |m: String| Error::Config(m);

    let (words, span, has_sentence) = match &line.sentence {
        None => (line.tokens.clone(), 0..line.tokens.len(), false),
        Some(sentence) => {
            let start = match line.start {
                Some(s) => s,
                None => sentence
                    .windows(line.tokens.len().max(1))
                    .position(|w| w == line.tokens.as_slice())
                    .ok_or_else(|| msg("mention tokens not found in sentence".into()))?,
            };
            let span = start..start + line.tokens.len();
            if span.end > sentence.len() || sentence[span.clone()] != line.tokens[..] {
                return Err(msg("mention tokens do not match sentence at `start`".into()));
            }
            (sentence.clone(), span, true)
        }
    };

    let n = words.len();
    let pos = aligned(&line.pos, n, "pos").map_err(msg)?;
    let dep = aligned(&line.dep, n, "dep").map_err(msg)?;
    let brown = aligned(&line.brown, n, "brown").map_err(msg)?;
    let context = words
        .into_iter()
        .zip(pos)
        .zip(dep)
        .zip(brown)
        .map(|(((text, pos), dep), brown)| TokenRecord {
            text,
            pos,
            dep_label: dep.as_ref().map(|d| d.rel.clone()),
            dep_governor: dep.and_then(|d| d.gov),
            brown_path: brown,
        })
        .collect();

    let candidates = resolve_types(&line.candidates, hierarchy, options)?;
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates { mention: id });
    }
    let gold = match &line.gold {
        None => None,
        Some(names) => {
            let g = resolve_types(names, hierarchy, options)?;
            if !hierarchy.is_path(&g) {
                return Err(msg(format!(
                    "gold types {:?} do not form a single type-path",
                    names
                )));
            }
            Some(g)
        }
    };

    let mention = Mention {
        id,
        entity_id: line.entity,
        doc_id: line.doc,
        sentence_id: line.sentence_id,
        context,
        span,
        head: line.head,
        candidates,
        gold,
        has_sentence,
    };
    mention.validate().map_err(msg)?;
    Ok(mention)
}

fn mention_to_line(m: &Mention, hierarchy: &TypeHierarchy) -> MentionLine {
    let texts: Vec<String> = m.context.iter().map(|t| t.text.clone()).collect();
    let any = |f: fn(&TokenRecord) -> bool| m.context.iter().any(f);
    MentionLine {
        id: Some(m.id),
        doc: m.doc_id.clone(),
        sentence_id: m.sentence_id.clone(),
        entity: m.entity_id.clone(),
        tokens: texts[m.span.clone()].to_vec(),
        sentence: m.has_sentence.then(|| texts.clone()),
        start: m.has_sentence.then_some(m.span.start),
        head: m.head,
        pos: any(|t| t.pos.is_some()).then(|| m.context.iter().map(|t| t.pos.clone()).collect()),
        dep: any(|t| t.dep_label.is_some()).then(|| {
            m.context
                .iter()
                .map(|t| {
                    t.dep_label.as_ref().map(|rel| Dependency {
                        rel: rel.clone(),
                        gov: t.dep_governor,
                    })
                })
                .collect()
        }),
        brown: any(|t| t.brown_path.is_some())
            .then(|| m.context.iter().map(|t| t.brown_path.clone()).collect()),
        candidates: hierarchy.names(&m.candidates).into_iter().map(String::from).collect(),
        gold: m
            .gold
            .as_ref()
            .map(|g| hierarchy.names(g).into_iter().map(String::from).collect()),
    }
}

/// Parses a corpus from line-delimited JSON text.
pub fn parse_corpus(
    text: &str,
    path: &Path,
    hierarchy: &TypeHierarchy,
    options: LoadOptions,
) -> Result<LabeledCorpus> {
    read_corpus(text.as_bytes(), path, hierarchy, options)
}

fn read_corpus<R: BufRead>(
    reader: R,
    path: &Path,
    hierarchy: &TypeHierarchy,
    options: LoadOptions,
) -> Result<LabeledCorpus> {
    let mut mentions = Vec::new();
    let mut seen = HashSet::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: MentionLine = serde_json::from_str(&line)
            .map_err(|e| Error::parse(path, lineno + 1, e.to_string()))?;
        let mention = mention_from_line(parsed, mentions.len(), hierarchy, options).map_err(|e| match e {
            Error::Config(m) => Error::parse(path, lineno + 1, m),
            Error::EmptyCandidates { .. } => Error::parse(path, lineno + 1, "empty candidate type set"),
            other => other,
        })?;
        if !seen.insert(mention.id) {
            return Err(Error::parse(path, lineno + 1, format!("duplicate mention id {}", mention.id)));
        }
        mentions.push(mention);
    }
    log::info!("loaded {} mentions from {}", mentions.len(), path.display());
    Ok(LabeledCorpus { mentions })
}

pub fn load_corpus(
    path: impl AsRef<Path>,
    hierarchy: &TypeHierarchy,
    options: LoadOptions,
) -> Result<LabeledCorpus> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_corpus(BufReader::new(file), path, hierarchy, options)
}

pub fn corpus_to_string(corpus: &LabeledCorpus, hierarchy: &TypeHierarchy) -> String {
    let mut out = String::new();
    for m in &corpus.mentions {
        out.push_str(&serde_json::to_string(&mention_to_line(m, hierarchy)).expect("serializable"));
        out.push('\n');
    }
    out
}

pub fn write_corpus(
    path: impl AsRef<Path>,
    corpus: &LabeledCorpus,
    hierarchy: &TypeHierarchy,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for m in &corpus.mentions {
        serde_json::to_writer(&mut w, &mention_to_line(m, hierarchy))
            .map_err(|e| Error::io(path, e.into()))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Non-candidate types `Ȳ = Y \ Y_i`.
pub fn complement(candidates: &TypeSet, hierarchy: &TypeHierarchy) -> TypeSet {
    hierarchy.ids().filter(|t| !candidates.contains(t)).collect()
}

pub fn doc_ids(corpus: &LabeledCorpus) -> BTreeSet<&str> {
    corpus.iter().filter_map(|m| m.doc_id.as_deref()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::TypeId;

    fn hierarchy() -> TypeHierarchy {
        TypeHierarchy::from_pairs(&[
            ("person", None),
            ("politician", Some("person")),
            ("businessman", Some("person")),
            ("artist", Some("person")),
            ("actor", Some("artist")),
            ("location", None),
        ])
        .unwrap()
    }

    fn parse(text: &str) -> Result<LabeledCorpus> {
        parse_corpus(text, Path::new("c.jsonl"), &hierarchy(), LoadOptions::default())
    }

    #[test]
    fn trump_with_five_candidates() {
        let c = parse(
            r#"{"tokens":["Trump"],"candidates":["person","politician","businessman","artist","actor"]}"#,
        )
        .unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.mentions[0].candidates.len(), 5);
        assert_eq!(c.mentions[0].head_token().text, "Trump");
    }

    #[test]
    fn leaf_candidate_is_closed_upward() {
        let c = parse(r#"{"tokens":["Hanks"],"candidates":["actor"]}"#).unwrap();
        let h = hierarchy();
        assert_eq!(
            h.names(&c.mentions[0].candidates),
            vec!["person", "artist", "actor"]
        );
    }

    #[test]
    fn closure_can_be_disabled() {
        let h = hierarchy();
        let c = parse_corpus(
            r#"{"tokens":["Hanks"],"candidates":["actor"]}"#,
            Path::new("c"),
            &h,
            LoadOptions { close_ancestors: false },
        )
        .unwrap();
        assert_eq!(c.mentions[0].candidates, [TypeId(4)].into());
    }

    #[test]
    fn empty_candidates_rejected_with_line_number() {
        let err = parse("{\"tokens\":[\"a\"],\"candidates\":[\"person\"]}\n{\"tokens\":[\"b\"],\"candidates\":[]}").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn malformed_line_reports_line() {
        let err = parse("{\"tokens\":[\"a\"],\"candidates\":[\"person\"]}\n\n{not json").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn unknown_type_is_named() {
        let err = parse(r#"{"tokens":["a"],"candidates":["wizard"]}"#).unwrap_err();
        assert!(matches!(err, Error::UnknownType(ref t) if t == "wizard"));
    }

    #[test]
    fn sentence_alignment_and_annotations() {
        let line = concat!(
            r#"{"sentence":["He","met","Donald","Trump","."],"tokens":["Donald","Trump"],"#,
            r#""pos":["PRP","VBD","NNP","NNP","."],"#,
            r#""dep":[null,null,{"rel":"nn","gov":3},{"rel":"dobj","gov":1},null],"#,
            r#""brown":[null,null,"0110","0111",null],"#,
            r#""candidates":["politician"],"gold":["politician"]}"#
        );
        let c = parse(line).unwrap();
        let m = &c.mentions[0];
        assert_eq!(m.span, 2..4);
        assert_eq!(m.head_token().text, "Trump");
        assert_eq!(m.tokens()[0].dep_label.as_deref(), Some("nn"));
        assert_eq!(m.tokens()[0].dep_governor, Some(3));
        assert_eq!(m.gold.as_ref().unwrap().len(), 2);
    }

    #[test]
    fn misaligned_annotation_rejected() {
        assert!(parse(r#"{"sentence":["a","b"],"tokens":["b"],"pos":["X"],"candidates":["person"]}"#).is_err());
    }

    #[test]
    fn bad_brown_path_rejected() {
        assert!(parse(r#"{"tokens":["a"],"brown":["01x"],"candidates":["person"]}"#).is_err());
    }

    #[test]
    fn gold_must_be_a_path() {
        assert!(parse(r#"{"tokens":["a"],"candidates":["person"],"gold":["actor","politician"]}"#).is_err());
    }

    #[test]
    fn head_out_of_range_rejected() {
        assert!(parse(r#"{"tokens":["a"],"head":1,"candidates":["person"]}"#).is_err());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let text = "{\"id\":3,\"tokens\":[\"a\"],\"candidates\":[\"person\"]}\n{\"id\":3,\"tokens\":[\"b\"],\"candidates\":[\"person\"]}";
        assert!(parse(text).is_err());
    }

    #[test]
    fn complement_partitions_types() {
        let h = hierarchy();
        let c = parse(r#"{"tokens":["Hanks"],"candidates":["actor"]}"#).unwrap();
        let cand = &c.mentions[0].candidates;
        let comp = complement(cand, &h);
        assert!(comp.is_disjoint(cand));
        assert_eq!(comp.len() + cand.len(), h.len());
    }

    #[test]
    fn write_then_parse_is_identity() {
        let h = hierarchy();
        let text = r#"{"doc":"d","entity":"e1","sentence":["He","met","Trump","."],"tokens":["Trump"],"pos":["PRP","VBD","NNP","."],"candidates":["actor"],"gold":["person"]}
{"tokens":["Paris"],"head":0,"candidates":["location"]}
"#;
        let c = parse(text).unwrap();
        let back = parse_corpus(&corpus_to_string(&c, &h), Path::new("x"), &h, LoadOptions::default()).unwrap();
        assert_eq!(c, back);
    }
}

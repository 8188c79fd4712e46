//! Strict, loose-macro and loose-micro typing metrics.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::LabeledCorpus;
use crate::error::{Error, Result};
use crate::hierarchy::{TypeHierarchy, TypeSet};

/// Type sets keyed by mention id.
pub type Labels = BTreeMap<usize, TypeSet>;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn new(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf { precision, recall, f1 }
    }
}

fn aligned<'a>(predictions: &'a Labels, gold: &'a Labels) -> Result<Vec<(&'a TypeSet, &'a TypeSet)>> {
    if gold.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    if predictions.len() != gold.len() || predictions.keys().ne(gold.keys()) {
        let missing = gold.keys().find(|k| !predictions.contains_key(k));
        let extra = predictions.keys().find(|k| !gold.contains_key(k));
        return Err(Error::Mismatch(format!(
            "prediction and gold mention ids differ (first missing: {missing:?}, first extra: {extra:?})"
        )));
    }
    Ok(predictions.values().zip(gold.values()).collect())
}

fn overlap(a: &TypeSet, b: &TypeSet) -> usize {
    a.intersection(b).count()
}

/// Fraction of mentions whose predicted set equals the gold set.
pub fn strict_accuracy(predictions: &Labels, gold: &Labels) -> Result<f64> {
    let pairs = aligned(predictions, gold)?;
    let exact = pairs.iter().filter(|(p, g)| p == g).count();
    Ok(exact as f64 / pairs.len() as f64)
}

/// Per-mention ratio, with an empty denominator counting 1 only when the
/// other side is also empty.
fn ratio(hits: usize, denom: &TypeSet, other: &TypeSet) -> f64 {
    if denom.is_empty() {
        if other.is_empty() {
            1.0
        } else {
            0.0
        }
    } else {
        hits as f64 / denom.len() as f64
    }
}

pub fn loose_macro(predictions: &Labels, gold: &Labels) -> Result<Prf> {
    let pairs = aligned(predictions, gold)?;
    let n = pairs.len() as f64;
    let (mut p, mut r) = (0.0, 0.0);
    for (pred, g) in &pairs {
        let hits = overlap(pred, g);
        p += ratio(hits, pred, g);
        r += ratio(hits, g, pred);
    }
    Ok(Prf::new(p / n, r / n))
}

pub fn loose_micro(predictions: &Labels, gold: &Labels) -> Result<Prf> {
    let pairs = aligned(predictions, gold)?;
    let (mut hits, mut predicted, mut actual) = (0usize, 0usize, 0usize);
    for (pred, g) in &pairs {
        hits += overlap(pred, g);
        predicted += pred.len();
        actual += g.len();
    }
    let precision = if predicted == 0 {
        log::warn!("no types predicted; micro precision set to 0");
        0.0
    } else {
        hits as f64 / predicted as f64
    };
    let recall = if actual == 0 { 0.0 } else { hits as f64 / actual as f64 };
    Ok(Prf::new(precision, recall))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelAccuracy {
    pub level: usize,
    /// Mentions whose gold path reaches this level.
    pub mentions: usize,
    pub accuracy: f64,
}

/// For each hierarchy level, the fraction of mentions reaching that level
/// whose predicted types at the level equal the gold ones.
pub fn per_level_accuracy(predictions: &Labels, gold: &Labels, hierarchy: &TypeHierarchy) -> Result<Vec<LevelAccuracy>> {
    let pairs = aligned(predictions, gold)?;
    let at = |s: &TypeSet, level: usize| -> TypeSet {
        s.iter().copied().filter(|&t| hierarchy.depth(t) == level).collect()
    };
    Ok((1..=hierarchy.max_depth())
        .filter_map(|level| {
            let reaching: Vec<_> = pairs.iter().filter(|(_, g)| !at(g, level).is_empty()).collect();
            (!reaching.is_empty()).then(|| {
                let correct = reaching.iter().filter(|(p, g)| at(p, level) == at(g, level)).count();
                LevelAccuracy {
                    level,
                    mentions: reaching.len(),
                    accuracy: correct as f64 / reaching.len() as f64,
                }
            })
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub mentions: usize,
    pub accuracy: f64,
    #[serde(rename = "macro")]
    pub macro_prf: Prf,
    #[serde(rename = "micro")]
    pub micro_prf: Prf,
    pub per_level: Vec<LevelAccuracy>,
}

pub fn evaluate(predictions: &Labels, gold: &Labels, hierarchy: &TypeHierarchy) -> Result<EvaluationReport> {
    Ok(EvaluationReport {
        mentions: gold.len(),
        accuracy: strict_accuracy(predictions, gold)?,
        macro_prf: loose_macro(predictions, gold)?,
        micro_prf: loose_micro(predictions, gold)?,
        per_level: per_level_accuracy(predictions, gold, hierarchy)?,
    })
}

/// Gold labels of every mention; errors if any mention lacks them.
pub fn gold_labels(corpus: &LabeledCorpus) -> Result<Labels> {
    corpus
        .iter()
        .map(|m| {
            m.gold
                .clone()
                .map(|g| (m.id, g))
                .ok_or_else(|| Error::Mismatch(format!("mention {} has no gold types", m.id)))
        })
        .collect()
}

/// Candidate sets of `predicted`, aligned to `gold`; gold mentions missing
/// from `predicted` (dropped by denoising or pruning) get the empty set.
pub fn predicted_labels(predicted: &LabeledCorpus, gold: &Labels) -> Result<Labels> {
    let mut out: Labels = gold.keys().map(|&id| (id, TypeSet::new())).collect();
    for m in predicted.iter() {
        match out.get_mut(&m.id) {
            Some(slot) => *slot = m.candidates.clone(),
            None => return Err(Error::Mismatch(format!("predicted mention {} has no gold counterpart", m.id))),
        }
    }
    Ok(out)
}

const COLUMNS: [&str; 7] = ["Acc", "Ma-P", "Ma-R", "Ma-F1", "Mi-P", "Mi-R", "Mi-F1"];

impl EvaluationReport {
    /// The seven headline numbers at four decimals.
    pub fn summary(&self) -> [(&'static str, String); 7] {
        let values = [
            self.accuracy,
            self.macro_prf.precision,
            self.macro_prf.recall,
            self.macro_prf.f1,
            self.micro_prf.precision,
            self.micro_prf.recall,
            self.micro_prf.f1,
        ];
        let mut out = COLUMNS.map(|c| (c, String::new()));
        for (slot, v) in out.iter_mut().zip(values) {
            slot.1 = format!("{v:.4}");
        }
        out
    }
}

/// One row per method with Acc, Ma-P/R/F1 and Mi-P/R/F1 columns.
pub fn format_table(rows: &[(&str, &EvaluationReport)]) -> String {
    let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(6);
    let mut out = format!("{:<width$}", "Method");
    for name in COLUMNS {
        let _ = write!(out, "  {name:>6}");
    }
    out.push('\n');
    for (name, report) in rows {
        let _ = write!(out, "{name:<width$}");
        for (_, v) in report.summary() {
            let _ = write!(out, "  {v:>6}");
        }
        out.push('\n');
    }
    out
}

impl EvaluationReport {
    pub fn level_table(&self) -> String {
        let mut out = String::from("Level  Mentions  Accuracy\n");
        for l in &self.per_level {
            let _ = writeln!(out, "{:>5}  {:>8}  {:>8.4}", l.level, l.mentions, l.accuracy);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::TypeId;

    fn set(ids: &[usize]) -> TypeSet {
        ids.iter().map(|&i| TypeId(i)).collect()
    }

    fn labels(sets: &[&[usize]]) -> Labels {
        sets.iter().enumerate().map(|(i, s)| (i, set(s))).collect()
    }

    // person=0, artist=1, org=2, company=3
    fn two_mention_fixture() -> (Labels, Labels) {
        (labels(&[&[0], &[2, 3]]), labels(&[&[0, 1], &[2]]))
    }

    #[test]
    fn two_mention_fixture_values() {
        let (pred, gold) = two_mention_fixture();
        assert_eq!(strict_accuracy(&pred, &gold).unwrap(), 0.0);
        let ma = loose_macro(&pred, &gold).unwrap();
        assert_eq!((ma.precision, ma.recall, ma.f1), (0.75, 0.75, 0.75));
        let mi = loose_micro(&pred, &gold).unwrap();
        assert_eq!((mi.precision, mi.recall), (2.0 / 3.0, 2.0 / 3.0));
        assert!((mi.f1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn perfect_and_disjoint() {
        let gold = labels(&[&[0, 1], &[2]]);
        assert_eq!(strict_accuracy(&gold, &gold).unwrap(), 1.0);
        assert_eq!(loose_macro(&gold, &gold).unwrap(), Prf::new(1.0, 1.0));
        assert_eq!(loose_micro(&gold, &gold).unwrap(), Prf::new(1.0, 1.0));
        let wrong = labels(&[&[3], &[1]]);
        assert_eq!(loose_macro(&wrong, &gold).unwrap(), Prf::default());
        assert_eq!(loose_micro(&wrong, &gold).unwrap(), Prf::default());
    }

    #[test]
    fn half_strict() {
        let gold = labels(&[&[0, 1], &[2]]);
        let pred = labels(&[&[0, 1], &[3]]);
        assert_eq!(strict_accuracy(&pred, &gold).unwrap(), 0.5);
    }

    #[test]
    fn empty_predictions() {
        let gold = labels(&[&[0], &[2], &[]]);
        let pred = labels(&[&[0], &[], &[]]);
        let mi = loose_micro(&pred, &gold).unwrap();
        assert_eq!(mi.precision, 1.0);
        assert_eq!(mi.recall, 0.5);
        let ma = loose_macro(&pred, &gold).unwrap();
        assert_eq!(ma.precision, 2.0 / 3.0);
        assert_eq!(loose_micro(&labels(&[&[], &[], &[]]), &gold).unwrap(), Prf::default());
    }

    #[test]
    fn errors() {
        let gold = labels(&[&[0]]);
        assert!(matches!(strict_accuracy(&Labels::new(), &Labels::new()), Err(Error::EmptyEvaluation)));
        let mut other = Labels::new();
        other.insert(5, set(&[0]));
        assert!(matches!(loose_macro(&other, &gold), Err(Error::Mismatch(_))));
    }

    #[test]
    fn levels() {
        let h = TypeHierarchy::from_pairs(&[("person", None), ("artist", Some("person")), ("org", None)]).unwrap();
        let gold = labels(&[&[0, 1], &[2], &[0]]);
        let pred = labels(&[&[0], &[2], &[0]]);
        let l = per_level_accuracy(&pred, &gold, &h).unwrap();
        assert_eq!(l.len(), 2);
        assert_eq!((l[0].mentions, l[0].accuracy), (3, 1.0));
        assert_eq!((l[1].mentions, l[1].accuracy), (1, 0.0));
    }

    #[test]
    fn table_has_four_decimals() {
        let (pred, gold) = two_mention_fixture();
        let h = TypeHierarchy::from_pairs(&[("a", None), ("b", Some("a")), ("c", None), ("d", Some("c"))]).unwrap();
        let r = evaluate(&pred, &gold, &h).unwrap();
        let t = format_table(&[("PLE", &r)]);
        assert!(t.contains("0.7500"));
        assert!(t.contains("0.6667"));
        assert!(t.starts_with("Method"));
    }
}

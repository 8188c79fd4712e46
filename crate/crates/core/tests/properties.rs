use std::collections::BTreeSet;

use ndarray::{Array1, Array2};
use proptest::prelude::*;
use proptest::sample::Index;

use ple::corpus::{complement, load_corpus, write_corpus, LabeledCorpus, LoadOptions, Mention, TokenRecord};
use ple::embedding::EmbeddingStore;
use ple::features::{extract_features, FeatureConfig, FeatureFamily, FeatureVocabulary};
use ple::graph::{build_hierarchy_correlation, build_kb_correlation, HeteroGraph, Link};
use ple::hierarchy::{TypeHierarchy, TypeId, TypeSet};
use ple::inference::infer_type_path;
use ple::kb::KbFacts;
use ple::metrics::{evaluate, loose_macro, loose_micro, strict_accuracy, Labels};
use ple::objective::{gradients, partial_label_loss, Negatives};
use ple::pruning::{all_prune, has_sibling_types, min_prune, sib_prune};

/// A forest over `parents.len()` types where type `i` hangs below an
/// earlier type or at the top level.
fn hierarchy_from(parents: &[Option<usize>]) -> TypeHierarchy {
    let names: Vec<String> = (0..parents.len()).map(|i| format!("t{i}")).collect();
    let pairs: Vec<(String, Option<String>)> = parents
        .iter()
        .enumerate()
        .map(|(i, p)| (names[i].clone(), p.map(|p| names[p].clone())))
        .collect();
    TypeHierarchy::from_pairs(&pairs).unwrap()
}

fn parents(max_types: usize) -> impl Strategy<Value = Vec<Option<usize>>> {
    prop::collection::vec(prop::option::weighted(0.7, any::<Index>()), 1..=max_types).prop_map(|raw| {
        raw.into_iter()
            .enumerate()
            .map(|(i, p)| if i == 0 { None } else { p.map(|ix| ix.index(i)) })
            .collect()
    })
}

fn closed_subset(hierarchy: &TypeHierarchy, mask: &[bool]) -> TypeSet {
    let picked: TypeSet = hierarchy.ids().filter(|t| mask[t.0 % mask.len()]).collect();
    let mut closed = hierarchy.ancestor_closure(&picked);
    if closed.is_empty() {
        closed.insert(TypeId(0));
    }
    closed
}

fn matrix(rows: usize, cols: usize, values: &[f64]) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |(r, c)| values[(r * cols + c) % values.len()])
}

fn random_path(hierarchy: &TypeHierarchy, pick: usize) -> TypeSet {
    hierarchy.path_to(TypeId(pick % hierarchy.len())).into_iter().collect()
}

/// A small corpus over a random hierarchy with ancestor-closed candidates,
/// gold paths and document ids.
#[derive(Clone, Debug)]
struct CorpusCase {
    hierarchy: TypeHierarchy,
    corpus: LabeledCorpus,
}

fn corpus_case() -> impl Strategy<Value = CorpusCase> {
    (
        parents(9),
        prop::collection::vec(
            (
                prop::collection::vec(any::<bool>(), 1..10),
                any::<usize>(),
                0usize..3,
                prop::collection::vec("[a-z]{1,6}", 1..4),
            ),
            1..25,
        ),
    )
        .prop_map(|(parents, rows)| {
            let hierarchy = hierarchy_from(&parents);
            let mentions = rows
                .into_iter()
                .enumerate()
                .map(|(id, (mask, gold, doc, words))| {
                    let tokens = words.into_iter().map(TokenRecord::new).collect();
                    let mut m = Mention::from_tokens(id, tokens, closed_subset(&hierarchy, &mask));
                    m.doc_id = Some(format!("d{doc}"));
                    m.gold = Some(random_path(&hierarchy, gold));
                    m
                })
                .collect();
            CorpusCase {
                hierarchy,
                corpus: LabeledCorpus::new(mentions),
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn corpus_round_trips_through_its_file_format(case in corpus_case()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        write_corpus(&path, &case.corpus, &case.hierarchy).unwrap();
        let back = load_corpus(&path, &case.hierarchy, LoadOptions::default()).unwrap();
        prop_assert_eq!(back, case.corpus);
    }

    #[test]
    fn ancestor_closure_is_idempotent_and_extensive(p in parents(12), mask in prop::collection::vec(any::<bool>(), 1..12)) {
        let h = hierarchy_from(&p);
        let s: TypeSet = h.ids().filter(|t| mask[t.0 % mask.len()]).collect();
        let once = h.ancestor_closure(&s);
        prop_assert!(once.is_superset(&s));
        prop_assert_eq!(h.ancestor_closure(&once), once.clone());
        let bigger: TypeSet = s.iter().copied().chain(std::iter::once(TypeId(0))).collect();
        prop_assert!(h.ancestor_closure(&bigger).is_superset(&once));
    }

    #[test]
    fn complement_partitions_the_type_set(case in corpus_case()) {
        let all: TypeSet = case.hierarchy.ids().collect();
        for m in case.corpus.iter() {
            let rest = complement(&m.candidates, &case.hierarchy);
            prop_assert!(rest.is_disjoint(&m.candidates));
            let union: TypeSet = rest.union(&m.candidates).copied().collect();
            prop_assert_eq!(&union, &all);
        }
    }

    #[test]
    fn feature_extraction_is_deterministic_and_order_free(case in corpus_case()) {
        let config = FeatureConfig::default();
        for m in case.corpus.iter() {
            prop_assert_eq!(extract_features(m, &config), extract_features(&m.clone(), &config));
        }
        let reversed = LabeledCorpus::new(case.corpus.mentions.iter().rev().cloned().collect());
        let relaxed = FeatureConfig { min_count: 1, ..FeatureConfig::default() };
        let a = FeatureVocabulary::build(&case.corpus, &relaxed).unwrap();
        let b = FeatureVocabulary::build(&reversed, &relaxed).unwrap();
        prop_assert_eq!(a.to_tsv(), b.to_tsv());
    }

    #[test]
    fn every_feature_carries_exactly_one_family_prefix(
        words in prop::collection::vec("[A-Za-z0-9:_-]{1,8}", 1..6),
        pos in "[A-Z]{2,3}",
        bits in "[01]{0,14}",
        rel in "[a-z]{2,5}",
    ) {
        let mut tokens: Vec<TokenRecord> = words.into_iter().map(TokenRecord::new).collect();
        for t in &mut tokens {
            t.pos = Some(pos.clone());
        }
        let head = tokens.len() - 1;
        tokens[head].brown_path = Some(bits.clone());
        tokens[head].dep_label = Some(rel);
        tokens[head].dep_governor = Some(0);
        let m = Mention::from_tokens(0, tokens, TypeSet::from([TypeId(0)]));
        let config = FeatureConfig::default();
        for f in extract_features(&m, &config) {
            let owners = FeatureFamily::ALL
                .into_iter()
                .filter(|fam| fam.prefixes().iter().any(|p| f.starts_with(p)))
                .count();
            prop_assert_eq!(owners, 1, "{}", f);
        }
        let brown: BTreeSet<String> = extract_features(&m, &config)
            .into_iter()
            .filter(|f| f.starts_with("BROWN_"))
            .collect();
        let expected: BTreeSet<String> = config
            .brown_prefix_lengths
            .iter()
            .filter(|&&p| p <= bits.len())
            .map(|&p| format!("BROWN_{p}_{}", &bits[..p]))
            .collect();
        prop_assert_eq!(brown, expected);
    }

    #[test]
    fn hierarchy_correlation_decreases_with_distance(p in parents(12)) {
        let h = hierarchy_from(&p);
        let links = build_hierarchy_correlation(&h);
        let k = h.len();
        prop_assert!(links.len() <= k * (k - 1) / 2);
        for l in &links {
            let rho = h.tree_distance(TypeId(l.src), TypeId(l.dst)).unwrap();
            prop_assert!(rho >= 1);
            prop_assert!(l.weight <= 0.5);
            prop_assert_eq!(Some(rho), h.tree_distance(TypeId(l.dst), TypeId(l.src)));
        }
        for a in &links {
            for b in &links {
                let ra = h.tree_distance(TypeId(a.src), TypeId(a.dst)).unwrap();
                let rb = h.tree_distance(TypeId(b.src), TypeId(b.dst)).unwrap();
                if ra < rb {
                    prop_assert!(a.weight > b.weight);
                }
            }
        }
    }

    #[test]
    fn kb_correlation_is_a_symmetric_overlap_score(
        p in parents(8),
        facts in prop::collection::vec((0usize..12, 0usize..64), 0..40),
    ) {
        let h = hierarchy_from(&p);
        let kb = KbFacts {
            facts: facts.into_iter().map(|(e, t)| (format!("e{e}"), TypeId(t % h.len()))).collect(),
            skipped: 0,
        };
        let sets = kb.entity_sets(h.len());
        let links = build_kb_correlation(&kb, &h);
        let k = h.len();
        prop_assert!(links.len() <= k * (k - 1) / 2);
        for l in &links {
            prop_assert!(l.src < l.dst);
            prop_assert!(l.weight > 0.0 && l.weight <= 1.0);
            prop_assert_eq!(l.weight == 1.0, sets[l.src] == sets[l.dst]);
        }
        for l in &links {
            let (a, b) = (&sets[l.dst], &sets[l.src]);
            let s = b.intersection(a).count() as f64;
            let w = (s / a.len() as f64 + s / b.len() as f64) / 2.0;
            prop_assert!((w - l.weight).abs() < 1e-12);
        }
        let linked: BTreeSet<(usize, usize)> = links.iter().map(|l| (l.src, l.dst)).collect();
        for a in 0..k {
            for b in a + 1..k {
                let shared = sets[a].intersection(&sets[b]).count();
                prop_assert_eq!(linked.contains(&(a, b)), shared > 0);
            }
        }
    }

    #[test]
    fn hinge_gradient_is_nonzero_exactly_when_the_margin_is_violated(
        k in 2usize..6,
        d in 1usize..5,
        values in prop::collection::vec(-1.0f64..1.0, 40),
        mask in prop::collection::vec(any::<bool>(), 6),
    ) {
        let mut cands: Vec<usize> = (0..k).filter(|&t| mask[t]).collect();
        if cands.is_empty() {
            cands.push(0);
        }
        let links: Vec<Link> = cands.iter().map(|&t| Link::new(0, t, 1.0)).collect();
        let graph = HeteroGraph::new(1, 1, k, links, Vec::new(), Vec::new()).unwrap();
        let mut emb = EmbeddingStore::zeros(1, 1, k, d);
        emb.mentions = matrix(1, d, &values);
        emb.types = matrix(k, d, &values[7..]);
        let g = gradients(&graph, &emb, 0.0, &Negatives::none(&graph)).unwrap();
        let hinge = partial_label_loss(emb.mention(0), emb.types.view(), &cands);
        let margin_violated = hinge.negative.is_some() && hinge.loss > 0.0;
        let nonzero = g.mentions.iter().any(|x| *x != 0.0);
        let best_types_differ = hinge
            .negative
            .is_some_and(|n| emb.types.row(n) != emb.types.row(hinge.positive));
        prop_assert_eq!(nonzero, margin_violated && best_types_differ);
    }

    #[test]
    fn inferred_paths_are_prefix_closed_candidate_paths_shrinking_in_threshold(
        p in parents(12),
        d in 1usize..6,
        values in prop::collection::vec(-1.0f64..1.0, 80),
        mask in prop::collection::vec(any::<bool>(), 1..12),
        lo in -1.0f64..1.0,
        step in 0.0f64..1.0,
    ) {
        let h = hierarchy_from(&p);
        let types = matrix(h.len(), d, &values);
        let u = Array1::from_iter(values[values.len() - d..].iter().copied());
        let cands = closed_subset(&h, &mask);
        let loose = infer_type_path(u.view(), types.view(), &cands, &h, lo);
        let strict = infer_type_path(u.view(), types.view(), &cands, &h, lo + step);
        for path in [&loose, &strict] {
            for (i, t) in path.iter().enumerate() {
                prop_assert!(cands.contains(t));
                let expected_parent = if i == 0 { None } else { Some(path[i - 1]) };
                prop_assert_eq!(h.parent(*t), expected_parent);
            }
        }
        prop_assert!(strict.len() <= loose.len());
        prop_assert_eq!(&loose[..strict.len()], &strict[..]);
    }

    #[test]
    fn inference_never_exceeds_the_candidate_recall(
        case in corpus_case(),
        d in 1usize..5,
        values in prop::collection::vec(-1.0f64..1.0, 60),
        threshold in -0.5f64..0.5,
    ) {
        let h = &case.hierarchy;
        let types = matrix(h.len(), d, &values);
        let mut gold = Labels::new();
        let mut raw = Labels::new();
        let mut denoised = Labels::new();
        for (i, m) in case.corpus.iter().enumerate() {
            let u = Array1::from_iter((0..d).map(|c| values[(3 * i + c + 11) % values.len()]));
            let path = infer_type_path(u.view(), types.view(), &m.candidates, h, threshold);
            gold.insert(m.id, m.gold.clone().unwrap());
            raw.insert(m.id, m.candidates.clone());
            denoised.insert(m.id, path.into_iter().collect());
        }
        let eps = 1e-12;
        prop_assert!(loose_micro(&denoised, &gold).unwrap().recall <= loose_micro(&raw, &gold).unwrap().recall + eps);
        prop_assert!(loose_macro(&denoised, &gold).unwrap().recall <= loose_macro(&raw, &gold).unwrap().recall + eps);
    }

    #[test]
    fn pruning_only_removes(case in corpus_case()) {
        let h = &case.hierarchy;
        let original: std::collections::BTreeMap<usize, &TypeSet> =
            case.corpus.iter().map(|m| (m.id, &m.candidates)).collect();
        let sib = sib_prune(&case.corpus, h);
        let min = min_prune(&case.corpus).unwrap();
        let all = all_prune(&case.corpus, h).unwrap();
        for pruned in [&sib, &min, &all] {
            for m in pruned.iter() {
                prop_assert!(!m.candidates.is_empty());
                prop_assert!(m.candidates.is_subset(original[&m.id]));
            }
        }
        for m in sib.iter() {
            prop_assert!(!has_sibling_types(&m.candidates, h));
        }
        prop_assert_eq!(all, min_prune(&sib).unwrap());
    }

    #[test]
    fn metrics_ignore_mention_order(case in corpus_case(), shift in 1usize..50) {
        let n = case.corpus.len();
        let gold: Labels = case.corpus.iter().map(|m| (m.id, m.gold.clone().unwrap())).collect();
        let pred: Labels = case.corpus.iter().map(|m| (m.id, m.candidates.clone())).collect();
        let relabel = |l: &Labels| -> Labels { l.iter().map(|(id, s)| ((n - 1 - id + shift) % n, s.clone())).collect() };
        let a = evaluate(&pred, &gold, &case.hierarchy).unwrap();
        let b = evaluate(&relabel(&pred), &relabel(&gold), &case.hierarchy).unwrap();
        let close = |x: f64, y: f64| (x - y).abs() < 1e-12;
        prop_assert!(close(a.accuracy, b.accuracy));
        prop_assert!(close(a.macro_prf.f1, b.macro_prf.f1));
        prop_assert!(close(a.micro_prf.f1, b.micro_prf.f1));
        prop_assert!(close(a.macro_prf.precision, b.macro_prf.precision));
        prop_assert!(close(a.micro_prf.recall, b.micro_prf.recall));
        prop_assert_eq!(a.per_level.len(), b.per_level.len());
    }

    #[test]
    fn perfect_strict_accuracy_implies_perfect_loose_scores(case in corpus_case()) {
        let gold: Labels = case.corpus.iter().map(|m| (m.id, m.gold.clone().unwrap())).collect();
        prop_assert_eq!(strict_accuracy(&gold, &gold).unwrap(), 1.0);
        for prf in [loose_macro(&gold, &gold).unwrap(), loose_micro(&gold, &gold).unwrap()] {
            prop_assert_eq!((prf.precision, prf.recall, prf.f1), (1.0, 1.0, 1.0));
        }
    }

    #[test]
    fn correcting_one_prediction_never_lowers_a_score(case in corpus_case(), pick in any::<Index>()) {
        let gold: Labels = case.corpus.iter().map(|m| (m.id, m.gold.clone().unwrap())).collect();
        let pred: Labels = case.corpus.iter().map(|m| (m.id, m.candidates.clone())).collect();
        let id = *gold.keys().nth(pick.index(gold.len())).unwrap();
        let mut fixed = pred.clone();
        fixed.insert(id, gold[&id].clone());
        let eps = 1e-12;
        prop_assert!(strict_accuracy(&fixed, &gold).unwrap() + eps >= strict_accuracy(&pred, &gold).unwrap());
        let (a, b) = (loose_macro(&pred, &gold).unwrap(), loose_macro(&fixed, &gold).unwrap());
        prop_assert!(b.precision + eps >= a.precision && b.recall + eps >= a.recall && b.f1 + eps >= a.f1);
        let (a, b) = (loose_micro(&pred, &gold).unwrap(), loose_micro(&fixed, &gold).unwrap());
        prop_assert!(b.precision + eps >= a.precision && b.recall + eps >= a.recall && b.f1 + eps >= a.f1);
    }
}

//! Seeded generator for small distantly labeled corpora with planted context
//! signal, used for smoke runs and benchmarks.
//!
//! Each entity is typed in the KB with two or three random fine types (and
//! their parents). A mention of the entity takes one of them as its true
//! type and all of them as candidates, so its candidate set is the true
//! type-path plus one or two confusion paths. Context words mix words
//! planted for the true type with shared noise words; both are split
//! evenly between the left and right context, so each word yields one
//! context feature. Mention surfaces come from a shared name pool and carry
//! no type signal. Besides the mentioned entities, the KB lists background
//! entities that carry a single type-path each.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{write_corpus, LabeledCorpus, Mention, TokenRecord};
use crate::error::{Error, Result};
use crate::features::{FeatureConfig, FeatureFamily};
use crate::hierarchy::{TypeHierarchy, TypeId, TypeSet};
use crate::kb::KbFacts;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub coarse_types: usize,
    pub fine_per_coarse: usize,
    pub mentions: usize,
    pub entities: usize,
    /// Distinct mention surface names.
    pub surface_names: usize,
    /// Planted context words per fine type, half on each side.
    pub planted_per_fine: usize,
    /// Noise context words, half on each side.
    pub noise_words: usize,
    /// Words on each side of the mention.
    pub window: usize,
    /// Of the `2 * window` context words, how many are noise words.
    pub noise_per_mention: usize,
    pub min_confusion: usize,
    pub max_confusion: usize,
    /// KB-only entities per fine type, each typed with that single path.
    pub background_entities: usize,
    pub mentions_per_doc: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            coarse_types: 4,
            fine_per_coarse: 3,
            mentions: 500,
            entities: 150,
            surface_names: 30,
            planted_per_fine: 40,
            noise_words: 200,
            window: 4,
            noise_per_mention: 1,
            min_confusion: 1,
            max_confusion: 2,
            background_entities: 50,
            mentions_per_doc: 10,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        let fine = self.coarse_types * self.fine_per_coarse;
        if self.coarse_types == 0 || self.fine_per_coarse == 0 {
            return fail("need at least one coarse and one fine type");
        }
        if self.min_confusion > self.max_confusion || self.max_confusion >= fine {
            return fail("confusion range must satisfy min <= max < number of fine types");
        }
        if self.mentions == 0 || self.entities == 0 || self.surface_names == 0 || self.mentions_per_doc == 0 {
            return fail("mentions, entities, surface_names and mentions_per_doc must be positive");
        }
        if self.planted_per_fine < 2 || self.noise_per_mention > 2 * self.window {
            return fail("need two planted words per type and at most 2 * window noise words per mention");
        }
        if self.noise_per_mention > 0 && self.noise_words < 2 {
            return fail("noise words requested but fewer than two available");
        }
        Ok(())
    }

    /// Feature extraction matching the generated text: context words only,
    /// over the generated window.
    pub fn feature_config(&self) -> FeatureConfig {
        FeatureConfig {
            context_window: self.window,
            enabled_families: [FeatureFamily::Context].into_iter().collect(),
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticData {
    pub hierarchy: TypeHierarchy,
    pub corpus: LabeledCorpus,
    pub kb: KbFacts,
}

impl SyntheticData {
    /// Writes `hierarchy.tsv`, `corpus.jsonl` and `kb_facts.tsv`.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: &str, text: String| {
            let p = dir.join(name);
            fs::write(&p, text).map_err(|e| Error::io(&p, e))
        };
        write("hierarchy.tsv", self.hierarchy.to_tsv())?;
        write_corpus(dir.join("corpus.jsonl"), &self.corpus, &self.hierarchy)?;
        let mut kb = String::new();
        for (e, t) in &self.kb.facts {
            kb.push_str(&format!("{e}\t{}\n", self.hierarchy.name(*t)));
        }
        write("kb_facts.tsv", kb)
    }
}

pub fn generate(config: &SyntheticConfig) -> Result<SyntheticData> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut pairs: Vec<(String, Option<String>)> = Vec::new();
    for c in 0..config.coarse_types {
        pairs.push((format!("coarse{c}"), None));
    }
    for c in 0..config.coarse_types {
        for f in 0..config.fine_per_coarse {
            pairs.push((format!("fine{c}_{f}"), Some(format!("coarse{c}"))));
        }
    }
    let hierarchy = TypeHierarchy::from_pairs(&pairs)?;
    let fine: Vec<TypeId> = hierarchy.ids().filter(|&t| hierarchy.depth(t) == 2).collect();

    // Word pools indexed by side (0 left, 1 right).
    let planted: Vec<[Vec<String>; 2]> = (0..fine.len())
        .map(|f| [0, 1].map(|side| (side..config.planted_per_fine).step_by(2).map(|j| format!("p{f}w{j}")).collect()))
        .collect();
    let noise: [Vec<String>; 2] = [0, 1].map(|side| (side..config.noise_words).step_by(2).map(|j| format!("n{j}")).collect());

    let mut kb = KbFacts::default();
    let mut entity_types: Vec<Vec<usize>> = Vec::with_capacity(config.entities);
    for e in 0..config.entities {
        let extra = rng.gen_range(config.min_confusion..=config.max_confusion);
        let mut types: Vec<usize> = (0..fine.len()).collect();
        types.shuffle(&mut rng);
        types.truncate(1 + extra);
        for &f in &types {
            for t in hierarchy.path_to(fine[f]) {
                kb.facts.insert((entity_name(e), t));
            }
        }
        entity_types.push(types);
    }
    for (f, &t) in fine.iter().enumerate() {
        for b in 0..config.background_entities {
            for p in hierarchy.path_to(t) {
                kb.facts.insert((format!("Background{f}_{b}"), p));
            }
        }
    }

    let mut mentions = Vec::with_capacity(config.mentions);
    for id in 0..config.mentions {
        let entity = rng.gen_range(0..config.entities);
        let types = &entity_types[entity];
        let truth = types[rng.gen_range(0..types.len())];

        // Planted (true) or noise (false) per context slot.
        let mut slots = vec![true; 2 * config.window];
        for s in slots.iter_mut().take(config.noise_per_mention) {
            *s = false;
        }
        slots.shuffle(&mut rng);
        let mut sentence: Vec<TokenRecord> = slots
            .iter()
            .enumerate()
            .map(|(slot, &planted_slot)| {
                let side = usize::from(slot >= config.window);
                let pool = if planted_slot { &planted[truth][side] } else { &noise[side] };
                TokenRecord::new(pool[rng.gen_range(0..pool.len())].clone())
            })
            .collect();
        let surface = format!("Name{}", rng.gen_range(0..config.surface_names));
        sentence.insert(config.window, TokenRecord::new(surface));

        let listed: TypeSet = types.iter().map(|&f| fine[f]).collect();
        let candidates = hierarchy.ancestor_closure(&listed);
        let mut m = Mention::in_sentence(id, sentence, config.window..config.window + 1, candidates);
        m.entity_id = Some(entity_name(entity));
        m.doc_id = Some(format!("doc{}", id / config.mentions_per_doc));
        m.gold = Some(hierarchy.path_to(fine[truth]).into_iter().collect());
        mentions.push(m);
    }

    Ok(SyntheticData {
        hierarchy,
        corpus: LabeledCorpus::new(mentions),
        kb,
    })
}

fn entity_name(e: usize) -> String {
    format!("Entity{e}")
}

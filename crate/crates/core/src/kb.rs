//! Knowledge-base entity-type facts mapped onto the target hierarchy.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::hierarchy::{TypeHierarchy, TypeId};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KbFacts {
    pub facts: BTreeSet<(String, TypeId)>,
    /// Facts whose KB type had no target type.
    pub skipped: usize,
}

impl KbFacts {
    /// `E_k` for every target type, indexed by type id.
    pub fn entity_sets(&self, num_types: usize) -> Vec<BTreeSet<&str>> {
        let mut sets = vec![BTreeSet::new(); num_types];
        for (e, t) in &self.facts {
            sets[t.0].insert(e.as_str());
        }
        sets
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }
}

/// Maps KB type names to target types. Unlisted names fall back to a
/// same-named target type.
#[derive(Clone, Debug, Default)]
pub struct TypeMap {
    map: HashMap<String, TypeId>,
}

impl TypeMap {
    pub fn parse(text: &str, path: &Path, hierarchy: &TypeHierarchy) -> Result<Self> {
        let mut map = HashMap::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (kb, target) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(path, lineno + 1, "expected `kb_type<TAB>target_type`"))?;
            let target = hierarchy.resolve(target.trim())?;
            if let Some(prev) = map.insert(kb.trim().to_string(), target) {
                if prev != target {
                    return Err(Error::parse(
                        path,
                        lineno + 1,
                        format!("KB type `{}` maps to more than one target type", kb.trim()),
                    ));
                }
            }
        }
        Ok(TypeMap { map })
    }

    pub fn load(path: impl AsRef<Path>, hierarchy: &TypeHierarchy) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path, hierarchy)
    }

    pub fn lookup(&self, kb_type: &str, hierarchy: &TypeHierarchy) -> Option<TypeId> {
        self.map.get(kb_type).copied().or_else(|| hierarchy.id(kb_type))
    }
}

pub fn parse_kb_facts(
    text: &str,
    path: &Path,
    hierarchy: &TypeHierarchy,
    type_map: &TypeMap,
) -> Result<KbFacts> {
    let mut kb = KbFacts::default();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (entity, kb_type) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(path, lineno + 1, "expected `entity<TAB>type`"))?;
        match type_map.lookup(kb_type.trim(), hierarchy) {
            Some(t) => {
                kb.facts.insert((entity.trim().to_string(), t));
            }
            None => kb.skipped += 1,
        }
    }
    if kb.facts.is_empty() {
        log::warn!("{}: no entity-type facts map into the hierarchy", path.display());
    }
    if kb.skipped > 0 {
        log::info!("{}: skipped {} facts with unmapped types", path.display(), kb.skipped);
    }
    Ok(kb)
}

pub fn load_kb_facts(
    path: impl AsRef<Path>,
    hierarchy: &TypeHierarchy,
    type_map: &TypeMap,
) -> Result<KbFacts> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_kb_facts(&text, path, hierarchy, type_map)
}

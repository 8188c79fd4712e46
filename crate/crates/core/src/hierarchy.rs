//! Target type hierarchy: a tree of `K` types below a synthetic root.
//!
//! The synthetic root is never materialized as a [`TypeId`]; top-level
//! types simply have no parent.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense index of a non-root type, `0..K`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TypeId(pub usize);

impl TypeId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for TypeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub type TypeSet = BTreeSet<TypeId>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TypeHierarchy {
    names: Vec<String>,
    parents: Vec<Option<TypeId>>,
    children: Vec<Vec<TypeId>>,
    top_level: Vec<TypeId>,
    depths: Vec<usize>,
    index: HashMap<String, TypeId>,
}

impl TypeHierarchy {
    /// Builds a hierarchy from `(name, parent name)` pairs. Ids follow input order.
    pub fn from_pairs<S: AsRef<str>>(pairs: &[(S, Option<S>)]) -> Result<Self> {
        let mut names = Vec::with_capacity(pairs.len());
        let mut index = HashMap::with_capacity(pairs.len());
        for (name, _) in pairs {
            let name = name.as_ref().trim();
            if name.is_empty() {
                return Err(Error::Hierarchy("empty type name".into()));
            }
            if index.insert(name.to_string(), TypeId(names.len())).is_some() {
                return Err(Error::Hierarchy(format!("duplicate child `{name}`")));
            }
            names.push(name.to_string());
        }

        let mut parents = Vec::with_capacity(names.len());
        for (name, parent) in pairs {
            let parent = match parent.as_ref().map(|p| p.as_ref().trim()) {
                None | Some("") => None,
                Some(p) => Some(*index.get(p).ok_or_else(|| {
                    Error::Hierarchy(format!(
                        "parent `{p}` of `{}` is not declared as a type",
                        name.as_ref().trim()
                    ))
                })?),
            };
            parents.push(parent);
        }

        let k = names.len();
        let mut depths = vec![0usize; k];
        for start in 0..k {
            // Walking up more than K steps means we are in a cycle.
            let mut depth = 1;
            let mut cur = parents[start];
            while let Some(p) = cur {
                if p.0 == start || depth > k {
                    return Err(Error::Hierarchy(format!(
                        "cycle detected through `{}`",
                        names[start]
                    )));
                }
                depth += 1;
                cur = parents[p.0];
            }
            depths[start] = depth;
        }

        let mut children = vec![Vec::new(); k];
        let mut top_level = Vec::new();
        for (i, parent) in parents.iter().enumerate() {
            match parent {
                Some(p) => children[p.0].push(TypeId(i)),
                None => top_level.push(TypeId(i)),
            }
        }

        Ok(TypeHierarchy {
            names,
            parents,
            children,
            top_level,
            depths,
            index,
        })
    }

    /// Parses `child<TAB>parent` lines; an empty or missing parent marks a top-level type.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut pairs = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split('\t');
            let child = fields.next().unwrap_or("").trim();
            let parent = fields.next().map(str::trim).filter(|p| !p.is_empty());
            if fields.next().is_some() {
                return Err(Error::parse(path, lineno + 1, "expected `child<TAB>parent`"));
            }
            if child.is_empty() {
                return Err(Error::parse(path, lineno + 1, "empty child type"));
            }
            pairs.push((child.to_string(), parent.map(str::to_string)));
        }
        Self::from_pairs(&pairs)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (i, name) in self.names.iter().enumerate() {
            out.push_str(name);
            out.push('\t');
            if let Some(p) = self.parents[i] {
                out.push_str(&self.names[p.0]);
            }
            out.push('\n');
        }
        out
    }

    /// Number of non-root types, `K`.
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = TypeId> {
        (0..self.names.len()).map(TypeId)
    }

    pub fn name(&self, id: TypeId) -> &str {
        &self.names[id.0]
    }

    pub fn id(&self, name: &str) -> Option<TypeId> {
        self.index.get(name).copied()
    }

    pub fn resolve(&self, name: &str) -> Result<TypeId> {
        self.id(name)
            .ok_or_else(|| Error::UnknownType(name.to_string()))
    }

    pub fn parent(&self, id: TypeId) -> Option<TypeId> {
        self.parents[id.0]
    }

    /// Children of `node`; `None` stands for the synthetic root.
    pub fn children(&self, node: Option<TypeId>) -> &[TypeId] {
        match node {
            Some(id) => &self.children[id.0],
            None => &self.top_level,
        }
    }

    pub fn top_level(&self) -> &[TypeId] {
        &self.top_level
    }

    /// Depth below the synthetic root (top-level types have depth 1).
    pub fn depth(&self, id: TypeId) -> usize {
        self.depths[id.0]
    }

    pub fn max_depth(&self) -> usize {
        self.depths.iter().copied().max().unwrap_or(0)
    }

    pub fn is_leaf(&self, id: TypeId) -> bool {
        self.children[id.0].is_empty()
    }

    /// Ancestors of `id` from its parent up to the top level.
    pub fn ancestors(&self, id: TypeId) -> impl Iterator<Item = TypeId> + '_ {
        std::iter::successors(self.parents[id.0], move |p| self.parents[p.0])
    }

    /// The root-to-node path ending in `id`, top-level type first.
    pub fn path_to(&self, id: TypeId) -> Vec<TypeId> {
        let mut path: Vec<TypeId> = self.ancestors(id).collect();
        path.reverse();
        path.push(id);
        path
    }

    /// Adds every ancestor of every member.
    pub fn ancestor_closure(&self, types: &TypeSet) -> TypeSet {
        let mut out = types.clone();
        for &t in types {
            out.extend(self.ancestors(t));
        }
        out
    }

    /// True when `types` is exactly one root-to-node path (the empty set counts).
    pub fn is_path(&self, types: &TypeSet) -> bool {
        let Some(deepest) = types.iter().copied().max_by_key(|&t| (self.depth(t), t)) else {
            return true;
        };
        types.len() == self.depth(deepest) && types.iter().all(|&t| t == deepest || self.is_ancestor(t, deepest))
    }

    pub fn is_ancestor(&self, ancestor: TypeId, of: TypeId) -> bool {
        self.ancestors(of).any(|a| a == ancestor)
    }

    /// Lowest common ancestor, or `None` when the only shared ancestor is the synthetic root.
    pub fn lowest_common_ancestor(&self, a: TypeId, b: TypeId) -> Option<TypeId> {
        let (mut a, mut b) = (Some(a), Some(b));
        while let (Some(x), Some(y)) = (a, b) {
            if x == y {
                return Some(x);
            }
            let (dx, dy) = (self.depth(x), self.depth(y));
            if dx >= dy {
                a = self.parent(x);
            }
            if dy >= dx {
                b = self.parent(y);
            }
        }
        None
    }

    /// Shortest-path length between two types, excluding paths through the synthetic root.
    pub fn tree_distance(&self, a: TypeId, b: TypeId) -> Option<usize> {
        let lca = self.lowest_common_ancestor(a, b)?;
        Some(self.depth(a) + self.depth(b) - 2 * self.depth(lca))
    }

    pub fn names<'a>(&'a self, types: impl IntoIterator<Item = &'a TypeId>) -> Vec<&'a str> {
        types.into_iter().map(|&t| self.name(t)).collect()
    }
}

//! Dense embeddings for mentions, features and the two views of each type,
//! plus their plain-text dump format.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1};
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::Variant;

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingStore {
    /// `u_i`, one row per mention.
    pub mentions: Array2<f64>,
    /// `c_j`, one row per feature.
    pub features: Array2<f64>,
    /// `v_k`, one row per type.
    pub types: Array2<f64>,
    /// `v'_k`, the context view of each type.
    pub type_contexts: Array2<f64>,
}

impl EmbeddingStore {
    pub fn zeros(mentions: usize, features: usize, types: usize, dim: usize) -> Self {
        EmbeddingStore {
            mentions: Array2::zeros((mentions, dim)),
            features: Array2::zeros((features, dim)),
            types: Array2::zeros((types, dim)),
            type_contexts: Array2::zeros((types, dim)),
        }
    }

    /// Every entry drawn uniformly from `[-scale, scale]`, blocks filled in
    /// the order mentions, features, types, type contexts.
    pub fn uniform<R: Rng + ?Sized>(
        mentions: usize,
        features: usize,
        types: usize,
        dim: usize,
        scale: f64,
        rng: &mut R,
    ) -> Self {
        let mut store = Self::zeros(mentions, features, types, dim);
        for block in store.blocks_mut() {
            block.mapv_inplace(|_| if scale > 0.0 { rng.gen_range(-scale..=scale) } else { 0.0 });
        }
        store
    }

    pub fn dim(&self) -> usize {
        self.mentions.ncols()
    }

    pub fn num_mentions(&self) -> usize {
        self.mentions.nrows()
    }

    pub fn num_features(&self) -> usize {
        self.features.nrows()
    }

    pub fn num_types(&self) -> usize {
        self.types.nrows()
    }

    pub fn mention(&self, i: usize) -> ArrayView1<'_, f64> {
        self.mentions.row(i)
    }

    pub fn blocks(&self) -> [&Array2<f64>; 4] {
        [&self.mentions, &self.features, &self.types, &self.type_contexts]
    }

    pub fn blocks_mut(&mut self) -> [&mut Array2<f64>; 4] {
        [
            &mut self.mentions,
            &mut self.features,
            &mut self.types,
            &mut self.type_contexts,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.iter().all(|x| x.is_finite()))
    }
}

const BLOCK_TAGS: [&str; 4] = ["U", "C", "V", "VP"];

/// Header metadata stored alongside a model dump.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelHeader {
    pub variant: Variant,
    pub seed: u64,
}

/// Writes `ple-model N M K d variant seed`, then one `tag id x_1 .. x_d` row
/// per vector. Components use the shortest exact decimal form.
pub fn write_model(path: impl AsRef<Path>, store: &EmbeddingStore, header: ModelHeader) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(
        w,
        "ple-model\t{}\t{}\t{}\t{}\t{}\t{}",
        store.num_mentions(),
        store.num_features(),
        store.num_types(),
        store.dim(),
        header.variant,
        header.seed
    )
    .map_err(io)?;
    for (tag, block) in BLOCK_TAGS.iter().zip(store.blocks()) {
        for (i, row) in block.rows().into_iter().enumerate() {
            write!(w, "{tag}\t{i}").map_err(io)?;
            for x in row {
                write!(w, "\t{x}").map_err(io)?;
            }
            writeln!(w).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

pub fn read_model(path: impl AsRef<Path>) -> Result<(EmbeddingStore, ModelHeader)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines().enumerate();
    let bad = |line: usize, m: &str| Error::parse(path, line, m.to_string());

    let (_, header) = lines.next().ok_or_else(|| bad(1, "empty model file"))?;
    let header = header.map_err(|e| Error::io(path, e))?;
    let fields: Vec<&str> = header.split('\t').collect();
    if fields.len() != 7 || fields[0] != "ple-model" {
        return Err(bad(1, "expected `ple-model N M K d variant seed` header"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad(1, "bad header count"));
    let (n, m, k, d) = (num(fields[1])?, num(fields[2])?, num(fields[3])?, num(fields[4])?);
    let variant: Variant = fields[5].parse()?;
    let seed: u64 = fields[6].parse().map_err(|_| bad(1, "bad seed"))?;

    let mut store = EmbeddingStore::zeros(n, m, k, d);
    let mut filled = [vec![false; n], vec![false; m], vec![false; k], vec![false; k]];
    for (lineno, line) in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let mut it = line.split('\t');
        let tag = it.next().unwrap_or("");
        let block = BLOCK_TAGS
            .iter()
            .position(|t| *t == tag)
            .ok_or_else(|| bad(lineno + 1, "unknown block tag"))?;
        let id: usize = it
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(lineno + 1, "bad row id"))?;
        let values: Vec<f64> = it
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad(lineno + 1, "bad component"))?;
        let target = &mut store.blocks_mut()[block];
        if id >= target.nrows() || values.len() != d {
            return Err(bad(lineno + 1, "row id or width does not match header"));
        }
        target.row_mut(id).assign(&ArrayView1::from(&values));
        filled[block][id] = true;
    }
    if filled.iter().any(|f| f.iter().any(|x| !x)) {
        return Err(bad(0, "model file is missing rows"));
    }
    Ok((store, ModelHeader { variant, seed }))
}

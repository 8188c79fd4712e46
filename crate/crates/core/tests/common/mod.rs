#![allow(dead_code)]

use ple::embedding::EmbeddingStore;
use ple::graph::{HeteroGraph, Link};
use ple::objective::Negatives;
use rand::seq::SliceRandom;
use rand::Rng;

pub struct Instance {
    pub graph: HeteroGraph,
    pub emb: EmbeddingStore,
    pub negatives: Negatives,
    pub lambda: f64,
}

/// A random graph with random embeddings and a fixed negative draw.
pub fn random_instance<R: Rng>(rng: &mut R, max_n: usize, max_m: usize, max_k: usize, max_d: usize, max_z: usize) -> Instance {
    let n = rng.gen_range(1..=max_n);
    let m = rng.gen_range(2..=max_m);
    let k = rng.gen_range(2..=max_k);
    let d = rng.gen_range(1..=max_d);
    let z = rng.gen_range(0..=max_z);

    let mut my = Vec::new();
    for i in 0..n {
        let mut types: Vec<usize> = (0..k).collect();
        types.shuffle(rng);
        let count = rng.gen_range(1..=k);
        for &t in &types[..count] {
            my.push(Link::new(i, t, 1.0));
        }
    }
    let mut mf = Vec::new();
    for i in 0..n {
        for j in 0..m {
            if rng.gen_bool(0.3) {
                mf.push(Link::new(i, j, if rng.gen_bool(0.5) { 1.0 } else { rng.gen_range(0.1..1.0) }));
            }
        }
    }
    let mut yy = Vec::new();
    for a in 0..k {
        for b in a + 1..k {
            if rng.gen_bool(0.5) {
                yy.push(Link::new(a, b, rng.gen_range(0.05..=1.0)));
            }
        }
    }
    let graph = HeteroGraph::new(n, m, k, my, mf, yy).unwrap();

    let mut emb = EmbeddingStore::zeros(n, m, k, d);
    for block in emb.blocks_mut() {
        block.mapv_inplace(|_| rng.gen_range(-1.0..1.0));
    }

    let mut mf_neg = Vec::new();
    for l in graph.mention_feature_links() {
        for _ in 0..z {
            mf_neg.push(loop {
                let j = rng.gen_range(0..m);
                if j != l.dst {
                    break j;
                }
            });
        }
    }
    let mut fwd = Vec::new();
    let mut bwd = Vec::new();
    for _ in graph.type_type_links() {
        for _ in 0..z {
            fwd.push(rng.gen_range(0..k));
            bwd.push(rng.gen_range(0..k));
        }
    }
    let negatives = Negatives::from_parts(&graph, z, mf_neg, fwd, bwd).unwrap();
    Instance {
        graph,
        emb,
        negatives,
        lambda: rng.gen_range(0.0..0.1),
    }
}

/// A straightforward transcription of the objective over plain slices.
pub fn reference_objective(inst: &Instance) -> (f64, f64, f64) {
    let g = &inst.graph;
    let e = &inst.emb;
    let dot = |a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>| -> f64 {
        a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
    };
    let ln_sig = |x: f64| -> f64 { -(1.0 + (-x).exp()).ln() };

    let mut o_my = 0.0;
    for i in 0..g.num_mentions() {
        let cands = g.candidates(i);
        let u = e.mentions.row(i);
        let mut best_in = f64::NEG_INFINITY;
        let mut best_out = f64::NEG_INFINITY;
        for t in 0..g.num_types() {
            let s = dot(u, e.types.row(t));
            if cands.contains(&t) {
                best_in = best_in.max(s);
            } else {
                best_out = best_out.max(s);
            }
        }
        if best_out > f64::NEG_INFINITY {
            o_my += (1.0 - (best_in - best_out)).max(0.0);
        }
    }
    let sq: f64 = e.mentions.iter().chain(e.types.iter()).map(|x| x * x).sum();
    o_my += inst.lambda / 2.0 * sq;

    let z = inst.negatives.per_link();
    let mut o_mf = 0.0;
    for (idx, l) in g.mention_feature_links().iter().enumerate() {
        let u = e.mentions.row(l.src);
        let mut term = ln_sig(dot(e.features.row(l.dst), u));
        for zz in 0..z {
            let neg = inst.negatives.for_feature_link(idx)[zz];
            term += ln_sig(-dot(e.features.row(neg), u));
        }
        o_mf -= l.weight * term;
    }

    let mut o_yy = 0.0;
    for (idx, l) in g.type_type_links().iter().enumerate() {
        for (src, dst, negs) in [
            (l.src, l.dst, inst.negatives.for_type_link_forward(idx)),
            (l.dst, l.src, inst.negatives.for_type_link_backward(idx)),
        ] {
            let v = e.types.row(src);
            let mut term = ln_sig(dot(e.type_contexts.row(dst), v));
            for &neg in negs {
                term += ln_sig(-dot(e.type_contexts.row(neg), v));
            }
            o_yy -= l.weight * term;
        }
    }
    (o_my, o_mf, o_yy)
}

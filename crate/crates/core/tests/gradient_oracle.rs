mod common;

use common::{random_instance, reference_objective};
use ple::objective::{gradients, objective};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;

fn total(inst: &common::Instance) -> f64 {
    objective(&inst.graph, &inst.emb, inst.lambda, &inst.negatives).unwrap().total()
}

#[test]
fn analytic_gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checked = 0usize;
    for _ in 0..25 {
        let mut inst = random_instance(&mut rng, 20, 30, 7, 8, 3);
        let grads = gradients(&inst.graph, &inst.emb, inst.lambda, &inst.negatives).unwrap();
        let analytic = [grads.mentions, grads.features, grads.types, grads.type_contexts];
        for (b, expected) in analytic.iter().enumerate() {
            let (rows, cols) = expected.dim();
            for r in 0..rows {
                for c in 0..cols {
                    let orig = inst.emb.blocks()[b][[r, c]];
                    inst.emb.blocks_mut()[b][[r, c]] = orig + H;
                    let plus = total(&inst);
                    inst.emb.blocks_mut()[b][[r, c]] = orig - H;
                    let minus = total(&inst);
                    inst.emb.blocks_mut()[b][[r, c]] = orig;
                    let numeric = (plus - minus) / (2.0 * H);
                    let a = expected[[r, c]];
                    let abs = (a - numeric).abs();
                    let rel = abs / a.abs().max(numeric.abs());
                    assert!(
                        abs < 1e-8 || rel < 1e-3,
                        "block {b} [{r},{c}]: analytic {a}, numeric {numeric}"
                    );
                    checked += 1;
                }
            }
        }
    }
    assert!(checked > 1000);
}

#[test]
fn objective_matches_reference_transcription() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..30 {
        let inst = random_instance(&mut rng, 5, 12, 6, 6, 3);
        let got = objective(&inst.graph, &inst.emb, inst.lambda, &inst.negatives).unwrap();
        let (my, mf, yy) = reference_objective(&inst);
        assert!((got.mention_type - my).abs() < 1e-10, "{} vs {my}", got.mention_type);
        assert!((got.mention_feature - mf).abs() < 1e-10, "{} vs {mf}", got.mention_feature);
        assert!((got.type_type - yy).abs() < 1e-10, "{} vs {yy}", got.type_type);
    }
}

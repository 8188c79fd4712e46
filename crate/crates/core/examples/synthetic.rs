//! Trains every variant on a generated corpus and prints evaluation tables.
//!
//! ```text
//! cargo run --release -p ple --example synthetic -- [seed] [dim]
//! ```

use ple::features::FeatureVocabulary;
use ple::graph::{HeteroGraph, TypeCorrelation, Variant};
use ple::inference::{denoise_corpus, InferenceConfig};
use ple::metrics::{evaluate, format_table, gold_labels, predicted_labels};
use ple::pruning::random_candidate_paths;
use ple::synthetic::{generate, SyntheticConfig};
use ple::trainer::{train, TrainingConfig};

fn main() -> ple::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let dim: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(20);

    let synth = SyntheticConfig {
        seed,
        ..Default::default()
    };
    let data = generate(&synth)?;
    let features = synth.feature_config();
    let vocab = FeatureVocabulary::build(&data.corpus, &features)?;
    let gold = gold_labels(&data.corpus)?;

    let raw = evaluate(&predicted_labels(&data.corpus, &gold)?, &gold, &data.hierarchy)?;
    let random = random_candidate_paths(&data.corpus, &data.hierarchy, seed);
    let random = evaluate(&predicted_labels(&random, &gold)?, &gold, &data.hierarchy)?;
    let mut reports = vec![("Raw".to_string(), raw), ("Random".to_string(), random)];
    for variant in Variant::ALL {
        let correlation = match variant {
            Variant::Ple => TypeCorrelation::Kb(&data.kb),
            Variant::PleCoh => TypeCorrelation::Hierarchy,
            Variant::PleNoCo => TypeCorrelation::None,
        };
        let graph = HeteroGraph::build(&data.corpus, &data.hierarchy, &vocab, &features, correlation)?;
        let config = TrainingConfig {
            dim,
            seed,
            variant,
            ..Default::default()
        };
        let model = train(&graph, &config)?;
        let last = model.log.last().expect("at least one iteration");
        let decreases = model.log.windows(2).filter(|w| w[1].objective < w[0].objective).count();
        println!(
            "{variant}: {} iterations, converged {}, O {:.2}, decreased in {}/{}",
            model.log.len(),
            model.converged,
            last.objective,
            decreases,
            model.log.len() - 1
        );
        let (clean, _) = denoise_corpus(&data.corpus, &data.hierarchy, &model.embeddings, &InferenceConfig::default())?;
        let report = evaluate(&predicted_labels(&clean, &gold)?, &gold, &data.hierarchy)?;
        print!("{}", report.level_table());
        reports.push((variant.to_string(), report));
    }
    let rows: Vec<_> = reports.iter().map(|(n, r)| (n.as_str(), r)).collect();
    print!("{}", format_table(&rows));
    Ok(())
}

//! `ple`: command-line pipeline for denoising distantly labeled entity
//! typing corpora.
//!
//! Every stage reads and writes plain files, so stages can be run one at a
//! time or chained with `pipeline`. Log verbosity is read from `PLE_LOG`.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use ple::corpus::{load_corpus, write_corpus, LabeledCorpus, LoadOptions};
use ple::embedding::{read_model, write_model, EmbeddingStore, ModelHeader};
use ple::features::{FeatureConfig, FeatureVocabulary};
use ple::graph::{HeteroGraph, TypeCorrelation, Variant};
use ple::hierarchy::{TypeHierarchy, TypeId};
use ple::inference::{denoise_corpus, infer_corpus, infer_unseen, retrain_loop, InferenceConfig};
use ple::kb::{load_kb_facts, KbFacts, TypeMap};
use ple::metrics::{evaluate, format_table, gold_labels, predicted_labels};
use ple::pruning::{noise_stats, prune, PruneMethod};
use ple::synthetic::{generate, SyntheticConfig};
use ple::trainer::{train, TrainedModel, TrainingConfig, UpdateRule};
use ple::{Error, Result};

const CONFIG_FILE: &str = "config.toml";
const FEATURES_FILE: &str = "features.tsv";
const MODEL_FILE: &str = "model.tsv";
const LOG_FILE: &str = "train_log.jsonl";
const DENOISED_FILE: &str = "denoised.jsonl";
const DROPPED_FILE: &str = "dropped.json";
const EVALUATION_FILE: &str = "evaluation.json";
const EVALUATION_TABLE: &str = "evaluation.txt";

#[derive(Parser)]
#[command(name = "ple", version, about = "Reduce label noise in distantly labeled entity typing corpora")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct GlobalArgs {
    /// Mention corpus, one JSON record per line.
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,
    /// Type hierarchy, `child<TAB>parent` per line.
    #[arg(long, global = true)]
    hierarchy: Option<PathBuf>,
    /// KB entity-type facts, `entity<TAB>type` per line.
    #[arg(long, global = true)]
    kb_facts: Option<PathBuf>,
    /// KB-to-target type map, `kb_type<TAB>target_type` per line.
    #[arg(long, global = true)]
    type_map: Option<PathBuf>,
    /// TOML file with [features], [training] and [inference] sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_parser = parse_variant)]
    variant: Option<Variant>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Bit-reproducible runs (on by default); `--deterministic false` lets
    /// the batch update rule reduce gradients in parallel.
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    deterministic: Option<bool>,
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Build the feature vocabulary and write features.tsv.
    ExtractFeatures,
    /// Build the heterogeneous graph and write its edge lists.
    BuildGraph {
        /// Frozen vocabulary; built from the corpus when absent.
        #[arg(long)]
        features: Option<PathBuf>,
    },
    /// Train embeddings; writes model.tsv and train_log.jsonl.
    Train {
        /// Directory written by build-graph; built from the corpus when absent.
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(long)]
        features: Option<PathBuf>,
    },
    /// Infer a type-path per mention; writes predictions.jsonl.
    Infer {
        #[arg(long)]
        model: PathBuf,
        /// Embed mentions through their features instead of the trained
        /// mention vectors.
        #[arg(long)]
        unseen: bool,
        /// Vocabulary used to train the model (required with --unseen).
        #[arg(long)]
        features: Option<PathBuf>,
    },
    /// Replace candidate sets with inferred paths; writes denoised.jsonl and
    /// dropped.json.
    Denoise {
        #[arg(long)]
        model: PathBuf,
    },
    /// Apply a pruning heuristic; writes pruned.jsonl.
    Prune {
        #[arg(long, value_parser = parse_method)]
        method: PruneMethod,
    },
    /// Print label noise statistics of a corpus.
    Stats,
    /// Score a labeled corpus against the gold types of --corpus.
    Evaluate {
        #[arg(long)]
        predicted: PathBuf,
    },
    /// Run extract-features, build-graph, train, denoise and evaluate.
    Pipeline,
    /// Train, denoise and retrain on the denoised labels.
    RetrainLoop {
        #[arg(long, default_value_t = 3)]
        iters: usize,
        #[arg(long)]
        features: Option<PathBuf>,
    },
    /// Write a seeded synthetic dataset with a matching config.toml.
    GenerateSynthetic,
}

fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_method(s: &str) -> std::result::Result<PruneMethod, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Everything a run depends on besides the input files.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Config {
    deterministic: Option<bool>,
    corpus: CorpusConfig,
    features: FeatureConfig,
    training: TrainingConfig,
    inference: InferenceConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct CorpusConfig {
    close_ancestors: bool,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            close_ancestors: LoadOptions::default().close_ancestors,
        }
    }
}

impl Config {
    fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {}", path.display(), e.message())))
    }

    fn resolve(path: Option<&Path>, args: &GlobalArgs) -> Result<Self> {
        let mut config = match path {
            Some(p) => Self::load(p)?,
            None => Config::default(),
        };
        if let Some(v) = args.variant {
            config.training.variant = v;
        }
        if let Some(s) = args.seed {
            config.training.seed = s;
        }
        if let Some(t) = args.threads {
            config.training.threads = t;
        }
        if let Some(d) = args.deterministic {
            config.deterministic = Some(d);
        }
        let deterministic = *config.deterministic.get_or_insert(true);
        if deterministic && config.training.update_rule == UpdateRule::Batch && config.training.threads > 1 {
            log::warn!("deterministic mode runs the batch update rule on one thread");
            config.training.threads = 1;
        }
        config.features.validate()?;
        config.training.validate()?;
        config.inference.validate()?;
        Ok(config)
    }

    fn load_options(&self) -> LoadOptions {
        LoadOptions {
            close_ancestors: self.corpus.close_ancestors,
        }
    }

    fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is serializable")
    }
}

struct Run {
    args: GlobalArgs,
    config: Config,
}

impl Run {
    fn input<'a>(&self, path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
        path.as_deref()
            .ok_or_else(|| Error::Config(format!("--{flag} is required for this command")))
    }

    fn hierarchy(&self) -> Result<TypeHierarchy> {
        TypeHierarchy::load(self.input(&self.args.hierarchy, "hierarchy")?)
    }

    fn corpus(&self, hierarchy: &TypeHierarchy) -> Result<LabeledCorpus> {
        self.corpus_at(self.input(&self.args.corpus, "corpus")?, hierarchy)
    }

    fn corpus_at(&self, path: &Path, hierarchy: &TypeHierarchy) -> Result<LabeledCorpus> {
        load_corpus(path, hierarchy, self.config.load_options())
    }

    /// KB facts, loaded only for the variant that uses them.
    fn kb(&self, hierarchy: &TypeHierarchy) -> Result<Option<KbFacts>> {
        if self.config.training.variant != Variant::Ple {
            return Ok(None);
        }
        let path = self.input(&self.args.kb_facts, "kb-facts")?;
        let type_map = match &self.args.type_map {
            Some(p) => TypeMap::load(p, hierarchy)?,
            None => TypeMap::default(),
        };
        load_kb_facts(path, hierarchy, &type_map).map(Some)
    }

    fn vocabulary(&self, frozen: Option<&Path>, corpus: &LabeledCorpus) -> Result<FeatureVocabulary> {
        match frozen {
            Some(p) => FeatureVocabulary::load_tsv(p),
            None => FeatureVocabulary::build(corpus, &self.config.features),
        }
    }

    /// Creates the output directory and echoes the effective config into it.
    fn out_dir(&self) -> Result<&Path> {
        let dir = self.input(&self.args.out_dir, "out-dir")?;
        create_dir(dir)?;
        write_file(&dir.join(CONFIG_FILE), self.config.to_toml())?;
        Ok(dir)
    }

    fn header(&self) -> ModelHeader {
        ModelHeader {
            variant: self.config.training.variant,
            seed: self.config.training.seed,
        }
    }
}

fn correlation(variant: Variant, kb: Option<&KbFacts>) -> TypeCorrelation<'_> {
    match (variant, kb) {
        (Variant::Ple, Some(kb)) => TypeCorrelation::Kb(kb),
        (Variant::PleCoh, _) => TypeCorrelation::Hierarchy,
        _ => TypeCorrelation::None,
    }
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))
}

fn write_file(path: &Path, text: String) -> Result<()> {
    fs::write(path, text).map_err(|e| io_error(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_file(path, serde_json::to_string_pretty(value).expect("serializable") + "\n")
}

fn write_log(path: &Path, model: &TrainedModel) -> Result<()> {
    let mut text = String::new();
    for record in &model.log {
        text.push_str(&serde_json::to_string(record).expect("serializable"));
        text.push('\n');
    }
    write_file(path, text)
}

fn write_training(dir: &Path, model: &TrainedModel, header: ModelHeader) -> Result<()> {
    write_model(dir.join(MODEL_FILE), &model.embeddings, header)?;
    write_log(&dir.join(LOG_FILE), model)
}

fn build_graph(run: &Run, dir: &Path, corpus: &LabeledCorpus, hierarchy: &TypeHierarchy, vocab: &FeatureVocabulary) -> Result<()> {
    let kb = run.kb(hierarchy)?;
    let graph = HeteroGraph::build(
        corpus,
        hierarchy,
        vocab,
        &run.config.features,
        correlation(run.config.training.variant, kb.as_ref()),
    )?;
    graph.write_dir(dir)
}

fn train_on(run: &Run, graph: &HeteroGraph) -> Result<TrainedModel> {
    let model = train(graph, &run.config.training)?;
    let last = model.log.last().map_or(f64::NAN, |r| r.objective);
    log::info!(
        "trained {} iterations (converged: {}), final objective {last:.6}",
        model.log.len(),
        model.converged
    );
    Ok(model)
}

fn denoise(run: &Run, dir: &Path, corpus: &LabeledCorpus, hierarchy: &TypeHierarchy, emb: &EmbeddingStore) -> Result<LabeledCorpus> {
    let (clean, report) = denoise_corpus(corpus, hierarchy, emb, &run.config.inference)?;
    write_corpus(dir.join(DENOISED_FILE), &clean, hierarchy)?;
    write_json(&dir.join(DROPPED_FILE), &report)?;
    Ok(clean)
}

fn evaluate_into(dir: Option<&Path>, predicted: &LabeledCorpus, gold: &LabeledCorpus, hierarchy: &TypeHierarchy) -> Result<()> {
    let gold = gold_labels(gold)?;
    let report = evaluate(&predicted_labels(predicted, &gold)?, &gold, hierarchy)?;
    let table = format!("{}\n{}", format_table(&[("PLE", &report)]), report.level_table());
    print!("{table}");
    if let Some(dir) = dir {
        let summary: serde_json::Map<String, serde_json::Value> = report
            .summary()
            .into_iter()
            .map(|(k, v)| (k.to_string(), serde_json::Value::String(v)))
            .collect();
        write_json(
            &dir.join(EVALUATION_FILE),
            &serde_json::json!({ "summary": summary, "report": report }),
        )?;
        write_file(&dir.join(EVALUATION_TABLE), table)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct Prediction<'a> {
    id: usize,
    path: Option<Vec<&'a str>>,
}

fn path_names<'a>(hierarchy: &'a TypeHierarchy, path: &[TypeId]) -> Vec<&'a str> {
    path.iter().map(|&t| hierarchy.name(t)).collect()
}

fn execute(command: Command, run: &Run) -> Result<()> {
    match command {
        Command::ExtractFeatures => {
            let hierarchy = run.hierarchy()?;
            let corpus = run.corpus(&hierarchy)?;
            let vocab = FeatureVocabulary::build(&corpus, &run.config.features)?;
            let dir = run.out_dir()?;
            vocab.write_tsv(dir.join(FEATURES_FILE))
        }
        Command::BuildGraph { features } => {
            let hierarchy = run.hierarchy()?;
            let corpus = run.corpus(&hierarchy)?;
            let vocab = run.vocabulary(features.as_deref(), &corpus)?;
            let dir = run.out_dir()?;
            build_graph(run, dir, &corpus, &hierarchy, &vocab)
        }
        Command::Train { graph, features } => {
            let graph = match graph {
                Some(g) => HeteroGraph::load_dir(g)?,
                None => {
                    let hierarchy = run.hierarchy()?;
                    let corpus = run.corpus(&hierarchy)?;
                    let vocab = run.vocabulary(features.as_deref(), &corpus)?;
                    let kb = run.kb(&hierarchy)?;
                    let correlation = correlation(run.config.training.variant, kb.as_ref());
                    HeteroGraph::build(&corpus, &hierarchy, &vocab, &run.config.features, correlation)?
                }
            };
            let model = train_on(run, &graph)?;
            write_training(run.out_dir()?, &model, run.header())
        }
        Command::Infer { model, unseen, features } => {
            let hierarchy = run.hierarchy()?;
            let corpus = run.corpus(&hierarchy)?;
            let (emb, _) = read_model(&model)?;
            let paths: Vec<Option<Vec<TypeId>>> = if unseen {
                let vocab = FeatureVocabulary::load_tsv(run.input(&features, "features")?)?;
                infer_unseen(&corpus, &hierarchy, &vocab, &run.config.features, &emb, &run.config.inference)?
            } else {
                infer_corpus(&corpus, &hierarchy, &emb, &run.config.inference)?
                    .into_iter()
                    .map(Some)
                    .collect()
            };
            let mut text = String::new();
            for (m, path) in corpus.iter().zip(&paths) {
                let line = Prediction {
                    id: m.id,
                    path: path.as_ref().map(|p| path_names(&hierarchy, p)),
                };
                text.push_str(&serde_json::to_string(&line).expect("serializable"));
                text.push('\n');
            }
            write_file(&run.out_dir()?.join("predictions.jsonl"), text)
        }
        Command::Denoise { model } => {
            let hierarchy = run.hierarchy()?;
            let corpus = run.corpus(&hierarchy)?;
            let (emb, _) = read_model(&model)?;
            denoise(run, run.out_dir()?, &corpus, &hierarchy, &emb).map(drop)
        }
        Command::Prune { method } => {
            let hierarchy = run.hierarchy()?;
            let corpus = run.corpus(&hierarchy)?;
            let pruned = prune(&corpus, &hierarchy, method)?;
            log::info!("{:?} pruning kept {} of {} mentions", method, pruned.len(), corpus.len());
            write_corpus(run.out_dir()?.join("pruned.jsonl"), &pruned, &hierarchy)
        }
        Command::Stats => {
            let hierarchy = run.hierarchy()?;
            let corpus = run.corpus(&hierarchy)?;
            let stats = noise_stats(&corpus, &hierarchy);
            print!("{}", stats.to_table());
            if run.args.out_dir.is_some() {
                write_json(&run.out_dir()?.join("noise_stats.json"), &stats)?;
            }
            Ok(())
        }
        Command::Evaluate { predicted } => {
            let hierarchy = run.hierarchy()?;
            let gold = run.corpus(&hierarchy)?;
            let predicted = run.corpus_at(&predicted, &hierarchy)?;
            let dir = match run.args.out_dir {
                Some(_) => Some(run.out_dir()?),
                None => None,
            };
            evaluate_into(dir, &predicted, &gold, &hierarchy)
        }
        Command::Pipeline => {
            let hierarchy = run.hierarchy()?;
            let corpus = run.corpus(&hierarchy)?;
            let dir = run.out_dir()?;
            FeatureVocabulary::build(&corpus, &run.config.features)?.write_tsv(dir.join(FEATURES_FILE))?;
            let vocab = FeatureVocabulary::load_tsv(dir.join(FEATURES_FILE))?;
            build_graph(run, dir, &corpus, &hierarchy, &vocab)?;
            let graph = HeteroGraph::load_dir(dir)?;
            let model = train_on(run, &graph)?;
            write_training(dir, &model, run.header())?;
            let (emb, _) = read_model(dir.join(MODEL_FILE))?;
            denoise(run, dir, &corpus, &hierarchy, &emb)?;
            if corpus.has_gold() {
                let clean = run.corpus_at(&dir.join(DENOISED_FILE), &hierarchy)?;
                evaluate_into(Some(dir), &clean, &corpus, &hierarchy)?;
            }
            Ok(())
        }
        Command::RetrainLoop { iters, features } => {
            let hierarchy = run.hierarchy()?;
            let corpus = run.corpus(&hierarchy)?;
            let vocab = run.vocabulary(features.as_deref(), &corpus)?;
            let kb = run.kb(&hierarchy)?;
            let rounds = retrain_loop(
                &corpus,
                &hierarchy,
                &vocab,
                &run.config.features,
                correlation(run.config.training.variant, kb.as_ref()),
                &run.config.training,
                &run.config.inference,
                iters,
            )?;
            let dir = run.out_dir()?;
            for (r, round) in rounds.iter().enumerate() {
                let sub = dir.join(format!("round_{}", r + 1));
                create_dir(&sub)?;
                write_training(&sub, &round.model, run.header())?;
                write_corpus(sub.join(DENOISED_FILE), &round.denoised, &hierarchy)?;
                write_json(&sub.join(DROPPED_FILE), &round.report)?;
            }
            Ok(())
        }
        Command::GenerateSynthetic => {
            let synth = SyntheticConfig {
                seed: run.config.training.seed,
                ..Default::default()
            };
            let data = generate(&synth)?;
            let dir = run.input(&run.args.out_dir, "out-dir")?;
            data.write_dir(dir)?;
            let mut config = run.config.clone();
            config.features = synth.feature_config();
            config.training.dim = 20;
            write_file(&dir.join(CONFIG_FILE), config.to_toml())
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 3,
        Error::Io { .. } => 1,
        Error::Parse { .. }
        | Error::UnknownType(_)
        | Error::Hierarchy(_)
        | Error::EmptyCandidates { .. }
        | Error::EmptyVocabulary { .. }
        | Error::DimensionMismatch { .. }
        | Error::Mismatch(_)
        | Error::MissingDocument { .. }
        | Error::EmptyEvaluation
        | Error::Untypeable { .. } => 4,
        Error::Config(_) => 5,
        Error::Diverged { .. } | Error::NonFinite { .. } => 6,
        Error::Sampler(_) => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PLE_LOG", "info")).init();
    let cli = Cli::parse();
    let result = Config::resolve(cli.global.config.as_deref(), &cli.global).and_then(|config| {
        let run = Run {
            args: cli.global,
            config,
        };
        execute(cli.command, &run)
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

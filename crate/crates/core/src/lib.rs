//! Label noise reduction for distantly supervised fine-grained entity typing.
//!
//! Mentions, their text features and the target types are embedded jointly
//! in one low-dimensional space. A partial-label hinge pushes the best
//! candidate type of each mention above every non-candidate type, while
//! second-order proximity terms tie mentions to their features and types to
//! correlated types. A top-down search over each mention's candidate
//! sub-tree then picks the type-path that fits its context.
//!
//! ```no_run
//! use ple::corpus::{load_corpus, LoadOptions};
//! use ple::features::{FeatureConfig, FeatureVocabulary};
//! use ple::graph::{HeteroGraph, TypeCorrelation};
//! use ple::hierarchy::TypeHierarchy;
//! use ple::inference::{denoise_corpus, InferenceConfig};
//! use ple::trainer::{train, TrainingConfig};
//!
//! # fn main() -> ple::Result<()> {
//! let hierarchy = TypeHierarchy::load("hierarchy.tsv")?;
//! let corpus = load_corpus("corpus.jsonl", &hierarchy, LoadOptions::default())?;
//! let features = FeatureConfig::default();
//! let vocab = FeatureVocabulary::build(&corpus, &features)?;
//! let graph = HeteroGraph::build(&corpus, &hierarchy, &vocab, &features, TypeCorrelation::Hierarchy)?;
//! let model = train(&graph, &TrainingConfig::default())?;
//! let (clean, report) = denoise_corpus(&corpus, &hierarchy, &model.embeddings, &InferenceConfig::default())?;
//! println!("kept {} of {} mentions", clean.len(), report.total);
//! # Ok(())
//! # }
//! ```

pub mod corpus;
pub mod embedding;
pub mod error;
pub mod features;
pub mod graph;
pub mod hierarchy;
pub mod inference;
pub mod kb;
pub mod metrics;
pub mod objective;
pub mod pruning;
pub mod sampler;
pub mod synthetic;
pub mod trainer;

pub use error::{Error, Result};

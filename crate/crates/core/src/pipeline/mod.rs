//! Dataset ingestion, run configuration and orchestration:
//! candidates, scores, route, link, then reports.

mod config;
mod dataset;
mod run;
mod train;

pub use config::{BackendConfig, EmbeddingConfig, RunConfig, TokenizerConfig};
pub use dataset::{extract_sentence, load_dataset, split_sentences, Dataset, DatasetError, MentionRecord};
pub use run::{
    extract_feature_rows, run_full_prompting, run_pipeline, FeatureRow, MentionOutcome, RunArtifact, RunMetadata,
    RunMode, ARTIFACT_FORMAT_VERSION,
};
pub use train::{read_feature_rows, train_end_to_end, train_router, write_feature_rows, TrainingOutcome};

use thiserror::Error;

use crate::llm::LlmEndpoint;
use crate::router::RouterError;
use crate::scoring::EmbeddingProvider;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Router(#[from] RouterError),
    #[error("mention {0:?} has no gold entity id")]
    MissingGold(String),
    #[error("{0}")]
    Artifact(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The backends a run talks to.
#[derive(Clone, Copy)]
pub struct Services<'a> {
    pub scoring: LlmEndpoint<'a>,
    pub reasoning: LlmEndpoint<'a>,
    pub embedder: &'a dyn EmbeddingProvider,
}

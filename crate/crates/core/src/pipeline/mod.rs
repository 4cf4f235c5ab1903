//! Corpus files, per-binary splitting, training, evaluation and metrics.

mod corpus;
mod eval;
mod metrics;
mod split;
mod train;

use std::path::PathBuf;

pub use corpus::{gen_corpus, read_corpus, subsample, vocabulary_corpus, write_corpus, GeneratedCorpus};
pub use eval::{evaluate, IdentifierRecord, PredictionReport, ReportRow, KEEP_CER_POLICY};
pub use metrics::{cer, levenshtein, partition_body_in_train, Partition};
pub use split::{split, SplitSpec, Splits};
pub use train::{run_training, train, EpochLog, TrainConfig, TrainOptions, TrainOutcome, TrainSummary};

use crate::model::ModelError;
use crate::neuro::NeuroError;
use crate::subtok::SubtokError;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Json {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Toml {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Subtok(#[from] SubtokError),
    #[error(transparent)]
    Neuro(#[from] NeuroError),
    #[error("invalid split: {0}")]
    Split(String),
    #[error("gold name is empty")]
    EmptyGold,
    #[error("{0} corpus is empty")]
    EmptyCorpus(&'static str),
    #[error("loss became non-finite in epoch {epoch}, batch {batch}")]
    Divergence { epoch: usize, batch: usize },
    #[error("invalid config: {0}")]
    Config(String),
}

impl PipelineError {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| PipelineError::Io { path, source }
    }
}

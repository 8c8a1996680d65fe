//! Classify free-text economic activity descriptions into ISIC codes.
//!
//! The engine works in two phases. First, every candidate embedding
//! provider is scored as a zero-training classifier at division level
//! (nearest category description by cosine similarity) and the best one is
//! kept. Second, a softmax head is trained over that provider's frozen
//! embeddings to predict full four-digit classes, and the result is
//! evaluated with support-weighted precision, recall and F1.

pub mod bundle;
pub mod dataset;
pub mod embedding;
pub mod head;
pub mod metrics;
pub mod pipeline;
pub mod selection;
pub mod taxonomy;

use thiserror::Error;

pub use bundle::{evaluate_bundle, ModelBundle, WeightsFile};
pub use dataset::{Dataset, LabelSpace, LabeledExample};
pub use embedding::{EmbeddingProvider, EmbeddingVector, HashingProvider, ProviderSpec};
pub use head::{HeadWeights, TrainConfig, TrainHistory};
pub use metrics::EvaluationReport;
pub use pipeline::{run_pipeline, PipelineConfig, PipelineError, Stage};
pub use selection::SelectionReport;
pub use taxonomy::{IsicCode, Level, Taxonomy};

/// Union of the module errors, used where stages are composed.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Taxonomy(#[from] taxonomy::TaxonomyError),
    #[error(transparent)]
    Dataset(#[from] dataset::DatasetError),
    #[error(transparent)]
    Embedding(#[from] embedding::EmbeddingError),
    #[error(transparent)]
    Selection(#[from] selection::SelectionError),
    #[error(transparent)]
    Head(#[from] head::HeadError),
    #[error(transparent)]
    Metrics(#[from] metrics::MetricsError),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("invalid bundle: {0}")]
    Bundle(String),
    #[error("label {0} is not among the bundle's labels")]
    UnknownLabel(String),
    #[error("provider mismatch: bundle was trained with {bundle}, got {given}")]
    ProviderMismatch { bundle: String, given: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl Error {
    pub(crate) fn io(path: &std::path::Path, e: impl std::fmt::Display) -> Self {
        Error::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

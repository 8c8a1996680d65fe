//! Zero-training model selection: each candidate provider classifies
//! division-level examples by nearest description embedding, and the most
//! accurate provider wins.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{label_space, Dataset, DatasetError};
use crate::embedding::{build_category_repository, embed_batch, EmbeddingError, EmbeddingProvider};
use crate::metrics::{accuracy, MetricsError};
use crate::taxonomy::{IsicCode, Level, Taxonomy};

/// Texts embedded per provider call during evaluation.
const EVAL_CHUNK: usize = 64;

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error("no candidate providers")]
    NoProviders,
    #[error("duplicate provider id {0}")]
    DuplicateProvider(String),
    #[error("evaluation label {0} is not at division level")]
    NotDivision(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("building category repository for {provider_id}: {source}")]
    Repository {
        provider_id: String,
        source: EmbeddingError,
    },
    #[error("provider {provider_id} failed after {evaluated} of {total} examples: {source}")]
    Aborted {
        provider_id: String,
        evaluated: usize,
        total: usize,
        source: EmbeddingError,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderScore {
    pub provider_id: String,
    pub accuracy: f64,
    pub evaluated_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub scores: Vec<ProviderScore>,
    pub winner: String,
}

/// Nearest-description predictions for every example, in order.
pub fn phase_one_predictions<P: EmbeddingProvider + ?Sized>(
    provider: &P,
    taxonomy: &Taxonomy,
    eval_set: &Dataset,
) -> Result<Vec<IsicCode>, SelectionError> {
    let space = label_space(eval_set)?;
    if let Some(bad) = space.labels.iter().find(|l| l.level() != Level::Division) {
        return Err(SelectionError::NotDivision(bad.to_string()));
    }
    let id = provider.provider_id().to_string();
    let repository =
        build_category_repository(taxonomy, &space.labels, provider).map_err(|source| {
            SelectionError::Repository {
                provider_id: id.clone(),
                source,
            }
        })?;
    let texts = eval_set.texts();
    let mut predictions = Vec::with_capacity(texts.len());
    let abort = |evaluated: usize, source: EmbeddingError| SelectionError::Aborted {
        provider_id: id.clone(),
        evaluated,
        total: texts.len(),
        source,
    };
    for chunk in texts.chunks(EVAL_CHUNK) {
        let done = predictions.len();
        let vectors = embed_batch(provider, chunk).map_err(|e| abort(done, e))?;
        for v in &vectors {
            let (label, _) = repository.nearest_category(v).map_err(|e| abort(done, e))?;
            predictions.push(label);
        }
    }
    Ok(predictions)
}

pub fn evaluate_provider<P: EmbeddingProvider + ?Sized>(
    provider: &P,
    taxonomy: &Taxonomy,
    eval_set: &Dataset,
) -> Result<ProviderScore, SelectionError> {
    let predictions = phase_one_predictions(provider, taxonomy, eval_set)?;
    Ok(ProviderScore {
        provider_id: provider.provider_id().to_string(),
        accuracy: accuracy(&eval_set.labels(), &predictions)?,
        evaluated_count: predictions.len(),
    })
}

/// Score every provider (concurrently, one thread each) and rank them.
pub fn select_model<P: EmbeddingProvider + ?Sized>(
    providers: &[&P],
    taxonomy: &Taxonomy,
    eval_set: &Dataset,
) -> Result<SelectionReport, SelectionError> {
    if providers.is_empty() {
        return Err(SelectionError::NoProviders);
    }
    let mut seen = HashSet::new();
    if let Some(dup) = providers.iter().find(|p| !seen.insert(p.provider_id())) {
        return Err(SelectionError::DuplicateProvider(
            dup.provider_id().to_string(),
        ));
    }
    let results: Vec<Result<ProviderScore, SelectionError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = providers
            .iter()
            .map(|p| scope.spawn(move || evaluate_provider(*p, taxonomy, eval_set)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("provider evaluation panicked"))
            .collect()
    });
    let scores = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(SelectionReport::from_scores(scores))
}

impl SelectionReport {
    /// Sort by accuracy (descending), then provider id (ascending).
    pub fn from_scores(mut scores: Vec<ProviderScore>) -> Self {
        scores.sort_by(|a, b| {
            b.accuracy
                .total_cmp(&a.accuracy)
                .then_with(|| a.provider_id.cmp(&b.provider_id))
        });
        let winner = scores
            .first()
            .map(|s| s.provider_id.clone())
            .unwrap_or_default();
        SelectionReport { scores, winner }
    }

    /// Two-column text table: model id and accuracy percent.
    pub fn render_table(&self) -> String {
        let width = self
            .scores
            .iter()
            .map(|s| s.provider_id.len())
            .chain(std::iter::once("Models".len()))
            .max()
            .unwrap_or(0);
        let mut out = format!("{:<width$}  {:>8}\n", "Models", "Accuracy");
        for s in &self.scores {
            out.push_str(&format!(
                "{:<width$}  {:>8}\n",
                s.provider_id,
                format!("{:.2}%", s.accuracy * 100.0)
            ));
        }
        out
    }
}

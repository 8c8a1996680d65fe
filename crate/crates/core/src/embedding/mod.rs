//! Embedding providers, cosine similarity and the per-category repository
//! used for zero-training nearest-description classification.

mod cache;
mod hashing;
mod remote;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::taxonomy::{IsicCode, Taxonomy, TaxonomyError};

pub use cache::{CachedProvider, EmbeddingCache};
pub use hashing::{fnv1a64, HashingProvider};
pub use remote::{EmbedRequest, EmbedResponse, RemoteProvider};

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("no embeddable tokens in {0:?}")]
    NoTokens(String),
    #[error("provider {provider_id}: {message}")]
    Provider {
        provider_id: String,
        message: String,
    },
    #[error("provider {provider_id} returned an invalid vector: {message}")]
    InvalidVector {
        provider_id: String,
        message: String,
    },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("zero-norm vector")]
    ZeroNorm,
    #[error("empty target label set")]
    EmptyLabels,
    #[error("empty category repository")]
    EmptyRepository,
    #[error("bad provider descriptor {0:?}: expected `hashing:<dim>` or an http:// endpoint")]
    BadDescriptor(String),
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
    #[error("embedding cache {path}: {message}")]
    Cache { path: String, message: String },
}

/// A finite, non-empty real vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, EmbeddingError> {
        if values.is_empty() {
            return Err(EmbeddingError::InvalidVector {
                provider_id: String::new(),
                message: "zero-length vector".into(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(EmbeddingError::InvalidVector {
                provider_id: String::new(),
                message: format!("non-finite entry at {i}"),
            });
        }
        Ok(EmbeddingVector(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, factor: f64) -> EmbeddingVector {
        EmbeddingVector(self.0.iter().map(|v| v * factor).collect())
    }
}

/// Anything that turns text into fixed-dimension vectors.
///
/// Implementations must be deterministic per `provider_id` and must not
/// return the zero vector for non-empty text. Callers go through [`embed`] /
/// [`embed_batch`], which enforce the contract on the way out.
pub trait EmbeddingProvider: Send + Sync {
    fn provider_id(&self) -> &str;

    /// Known output dimension, if the provider can tell without a call.
    fn dimension(&self) -> Option<usize>;

    /// Raw vectors for `texts`, in order.
    fn embed_texts(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbeddingError>;
}

impl<P: EmbeddingProvider + ?Sized> EmbeddingProvider for Box<P> {
    fn provider_id(&self) -> &str {
        (**self).provider_id()
    }

    fn dimension(&self) -> Option<usize> {
        (**self).dimension()
    }

    fn embed_texts(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
        (**self).embed_texts(texts)
    }
}

impl<P: EmbeddingProvider + ?Sized> EmbeddingProvider for std::sync::Arc<P> {
    fn provider_id(&self) -> &str {
        (**self).provider_id()
    }

    fn dimension(&self) -> Option<usize> {
        (**self).dimension()
    }

    fn embed_texts(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
        (**self).embed_texts(texts)
    }
}

pub fn embed<P: EmbeddingProvider + ?Sized>(
    provider: &P,
    text: &str,
) -> Result<EmbeddingVector, EmbeddingError> {
    Ok(embed_batch(provider, &[text])?.remove(0))
}

/// Embed several texts; output order follows input order.
pub fn embed_batch<P: EmbeddingProvider + ?Sized>(
    provider: &P,
    texts: &[&str],
) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
    if texts.iter().any(|t| t.trim().is_empty()) {
        return Err(EmbeddingError::EmptyText);
    }
    if texts.is_empty() {
        return Ok(Vec::new());
    }
    let id = provider.provider_id();
    let invalid = |message: String| EmbeddingError::InvalidVector {
        provider_id: id.to_string(),
        message,
    };
    let raw = provider.embed_texts(texts)?;
    if raw.len() != texts.len() {
        return Err(invalid(format!(
            "{} vectors for {} texts",
            raw.len(),
            texts.len()
        )));
    }
    let dim = provider.dimension().unwrap_or(raw[0].len());
    raw.into_iter()
        .map(|values| {
            if values.len() != dim {
                return Err(invalid(format!("length {} instead of {dim}", values.len())));
            }
            if values.iter().all(|v| *v == 0.0) {
                return Err(invalid("all-zero vector".into()));
            }
            EmbeddingVector::new(values).map_err(|e| invalid(e.to_string()))
        })
        .collect()
}

/// Cosine of the angle between `u` and `v`, clamped to [-1, 1].
pub fn cosine_similarity(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64, EmbeddingError> {
    if u.dim() != v.dim() {
        return Err(EmbeddingError::DimensionMismatch {
            left: u.dim(),
            right: v.dim(),
        });
    }
    let (nu, nv) = (u.norm(), v.norm());
    if nu == 0.0 || nv == 0.0 {
        return Err(EmbeddingError::ZeroNorm);
    }
    let dot: f64 = u.0.iter().zip(&v.0).map(|(a, b)| a * b).sum();
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

/// Embeddings of category descriptions, keyed by code.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryRepository {
    provider_id: String,
    dim: usize,
    entries: BTreeMap<IsicCode, EmbeddingVector>,
}

impl CategoryRepository {
    /// Repository from hand-made entries; all vectors must share a dimension.
    pub fn from_entries(
        provider_id: impl Into<String>,
        entries: impl IntoIterator<Item = (IsicCode, EmbeddingVector)>,
    ) -> Result<Self, EmbeddingError> {
        let entries: BTreeMap<_, _> = entries.into_iter().collect();
        let dim = entries
            .values()
            .next()
            .map(EmbeddingVector::dim)
            .ok_or(EmbeddingError::EmptyLabels)?;
        for v in entries.values() {
            if v.dim() != dim {
                return Err(EmbeddingError::DimensionMismatch {
                    left: dim,
                    right: v.dim(),
                });
            }
        }
        Ok(CategoryRepository {
            provider_id: provider_id.into(),
            dim,
            entries,
        })
    }

    pub fn provider_id(&self) -> &str {
        &self.provider_id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, code: &IsicCode) -> Option<&EmbeddingVector> {
        self.entries.get(code)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&IsicCode, &EmbeddingVector)> {
        self.entries.iter()
    }

    /// Highest-cosine category; ties go to the smaller code.
    pub fn nearest_category(
        &self,
        query: &EmbeddingVector,
    ) -> Result<(IsicCode, f64), EmbeddingError> {
        let mut best: Option<(&IsicCode, f64)> = None;
        for (code, stored) in &self.entries {
            let score = cosine_similarity(query, stored)?;
            // Strict comparison keeps the first (smallest) code on ties.
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((code, score));
            }
        }
        best.map(|(c, s)| (c.clone(), s))
            .ok_or(EmbeddingError::EmptyRepository)
    }
}

/// Embed each target label's taxonomy description.
pub fn build_category_repository<P: EmbeddingProvider + ?Sized>(
    taxonomy: &Taxonomy,
    labels: &[IsicCode],
    provider: &P,
) -> Result<CategoryRepository, EmbeddingError> {
    if labels.is_empty() {
        return Err(EmbeddingError::EmptyLabels);
    }
    let descriptions = labels
        .iter()
        .map(|code| taxonomy.describe(code))
        .collect::<Result<Vec<_>, _>>()?;
    let vectors = embed_batch(provider, &descriptions)?;
    CategoryRepository::from_entries(provider.provider_id(), labels.iter().cloned().zip(vectors))
}

/// How to reach a provider: `hashing:<dim>` or an `http(s)://` base URL.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderSpec {
    pub id: String,
    pub source: String,
}

impl ProviderSpec {
    pub fn new(id: impl Into<String>, source: impl Into<String>) -> Self {
        ProviderSpec {
            id: id.into(),
            source: source.into(),
        }
    }

    pub fn connect(&self) -> Result<Box<dyn EmbeddingProvider>, EmbeddingError> {
        let bad = || EmbeddingError::BadDescriptor(self.source.clone());
        if self.id.trim().is_empty() {
            return Err(bad());
        }
        if let Some(dim) = self.source.strip_prefix("hashing:") {
            let dim: usize = dim.trim().parse().map_err(|_| bad())?;
            let provider = HashingProvider::new(dim).map_err(|_| bad())?;
            return Ok(Box::new(provider.with_id(&self.id)));
        }
        if self.source.starts_with("http://") || self.source.starts_with("https://") {
            return Ok(Box::new(RemoteProvider::new(&self.id, &self.source)));
        }
        Err(bad())
    }
}

impl fmt::Display for ProviderSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={}", self.id, self.source)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(values: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(values.to_vec()).unwrap()
    }

    fn code(s: &str) -> IsicCode {
        IsicCode::parse(s).unwrap()
    }

    #[test]
    fn cosine_examples() {
        assert!((cosine_similarity(&v(&[1.0, 2.0]), &v(&[1.0, 2.0])).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(
            cosine_similarity(&v(&[1.0, 0.0]), &v(&[0.0, 3.0])).unwrap(),
            0.0
        );
        // 1/sqrt(2) to 30 digits: 0.707106781186547524400844362105
        let c = cosine_similarity(&v(&[1.0, 0.0]), &v(&[1.0, 1.0])).unwrap();
        assert!((c - 0.707_106_781_186_547_5).abs() < 1e-15);
        assert!(matches!(
            cosine_similarity(&v(&[1.0]), &v(&[1.0, 1.0])),
            Err(EmbeddingError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            cosine_similarity(&v(&[0.0, 0.0]), &v(&[1.0, 1.0])),
            Err(EmbeddingError::ZeroNorm)
        ));
    }

    #[test]
    fn rejects_non_finite() {
        assert!(EmbeddingVector::new(vec![1.0, f64::NAN]).is_err());
        assert!(EmbeddingVector::new(vec![]).is_err());
    }

    #[test]
    fn nearest_identity_and_ties() {
        let repo = CategoryRepository::from_entries(
            "t",
            [
                (code("43"), v(&[1.0, 0.0, 0.0])),
                (code("01"), v(&[0.0, 1.0, 0.0])),
                (code("10"), v(&[0.0, 0.0, 1.0])),
            ],
        )
        .unwrap();
        assert_eq!(
            repo.nearest_category(&v(&[1.0, 0.0, 0.0])).unwrap(),
            (code("43"), 1.0)
        );

        let tied = CategoryRepository::from_entries(
            "t",
            [(code("45"), v(&[1.0, 1.0])), (code("44"), v(&[2.0, 2.0]))],
        )
        .unwrap();
        assert_eq!(
            tied.nearest_category(&v(&[1.0, 1.0])).unwrap().0,
            code("44")
        );
        assert!(tied.nearest_category(&v(&[1.0])).is_err());
    }

    #[test]
    fn nearest_matches_exhaustive_scan() {
        let entries = [
            (code("01"), v(&[0.9, 0.1, -0.2])),
            (code("02"), v(&[-0.3, 0.8, 0.4])),
            (code("03"), v(&[0.2, 0.2, 0.9])),
        ];
        let repo = CategoryRepository::from_entries("t", entries.clone()).unwrap();
        let query = v(&[0.1, 0.7, 0.5]);
        // Hand evaluation of the three cosines.
        let scores: Vec<f64> = entries
            .iter()
            .map(|(_, e)| {
                let dot: f64 = e
                    .as_slice()
                    .iter()
                    .zip(query.as_slice())
                    .map(|(a, b)| a * b)
                    .sum();
                dot / (e.norm() * query.norm())
            })
            .collect();
        let best = (0..3)
            .max_by(|&a, &b| scores[a].total_cmp(&scores[b]))
            .unwrap();
        let (label, score) = repo.nearest_category(&query).unwrap();
        assert_eq!(label, entries[best].0);
        assert!((score - scores[best]).abs() < 1e-15);
    }

    #[test]
    fn repository_from_taxonomy() {
        let tax = crate::taxonomy::parse_taxonomy(
            "level,code,parent,description\nsection,F,,Construction\ndivision,43,F,Specialized Construction Activities\n",
        )
        .unwrap();
        let provider = HashingProvider::new(16).unwrap();
        let repo = build_category_repository(&tax, &[code("43")], &provider).unwrap();
        assert_eq!(repo.len(), 1);
        assert_eq!(
            repo.get(&code("43")).unwrap(),
            &embed(&provider, "Specialized Construction Activities").unwrap()
        );
        assert!(matches!(
            build_category_repository(&tax, &[], &provider),
            Err(EmbeddingError::EmptyLabels)
        ));
        assert!(matches!(
            build_category_repository(&tax, &[code("01")], &provider),
            Err(EmbeddingError::Taxonomy(_))
        ));
    }

    #[test]
    fn descriptor_parsing() {
        let p = ProviderSpec::new("h8", "hashing:8").connect().unwrap();
        assert_eq!(p.provider_id(), "h8");
        assert_eq!(p.dimension(), Some(8));
        assert!(ProviderSpec::new("x", "hashing:0").connect().is_err());
        assert!(ProviderSpec::new("x", "gpt2").connect().is_err());
        let remote = ProviderSpec::new("r", "http://127.0.0.1:1")
            .connect()
            .unwrap();
        assert_eq!(remote.provider_id(), "r");
    }
}

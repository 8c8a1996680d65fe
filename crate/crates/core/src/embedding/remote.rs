use std::sync::OnceLock;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{EmbeddingError, EmbeddingProvider};

/// Body of `POST /v1/embed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub texts: Vec<String>,
}

/// Response of `POST /v1/embed`; `vectors` follow request order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub provider_id: String,
    pub dim: usize,
    pub vectors: Vec<Vec<f64>>,
}

/// Client for an embedding server speaking the `/v1/embed` JSON protocol.
pub struct RemoteProvider {
    id: String,
    url: String,
    agent: ureq::Agent,
    dim: OnceLock<usize>,
}

impl RemoteProvider {
    pub fn new(id: &str, endpoint: &str) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(60)))
            .build()
            .into();
        RemoteProvider {
            id: id.to_string(),
            url: format!("{}/v1/embed", endpoint.trim_end_matches('/')),
            agent,
            dim: OnceLock::new(),
        }
    }

    fn failure(&self, message: impl Into<String>) -> EmbeddingError {
        EmbeddingError::Provider {
            provider_id: self.id.clone(),
            message: message.into(),
        }
    }
}

impl EmbeddingProvider for RemoteProvider {
    fn provider_id(&self) -> &str {
        &self.id
    }

    fn dimension(&self) -> Option<usize> {
        self.dim.get().copied()
    }

    fn embed_texts(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
        let request = EmbedRequest {
            texts: texts.iter().map(|t| t.to_string()).collect(),
        };
        let response: EmbedResponse = self
            .agent
            .post(&self.url)
            .send_json(&request)
            .map_err(|e| self.failure(format!("POST {}: {e}", self.url)))?
            .body_mut()
            .read_json()
            .map_err(|e| self.failure(format!("decoding response: {e}")))?;
        if response.vectors.len() != texts.len() {
            return Err(self.failure(format!(
                "{} vectors for {} texts",
                response.vectors.len(),
                texts.len()
            )));
        }
        if let Some(v) = response.vectors.iter().find(|v| v.len() != response.dim) {
            return Err(self.failure(format!(
                "vector of length {} but dim {}",
                v.len(),
                response.dim
            )));
        }
        let dim = *self.dim.get_or_init(|| response.dim);
        if dim != response.dim {
            return Err(self.failure(format!("dimension changed from {dim} to {}", response.dim)));
        }
        Ok(response.vectors)
    }
}

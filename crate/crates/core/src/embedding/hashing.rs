use super::{EmbeddingError, EmbeddingProvider};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |hash, &b| {
        (hash ^ u64::from(b)).wrapping_mul(FNV_PRIME)
    })
}

/// Bag-of-tokens feature hashing: split on non-alphanumeric characters,
/// lowercase each token, add 1.0 to bucket `fnv1a64(token) % dim`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HashingProvider {
    id: String,
    dim: usize,
}

impl HashingProvider {
    pub fn new(dim: usize) -> Result<Self, EmbeddingError> {
        if dim == 0 {
            return Err(EmbeddingError::InvalidVector {
                provider_id: "hashing:0".into(),
                message: "dimension must be at least 1".into(),
            });
        }
        Ok(HashingProvider {
            id: format!("hashing:{dim}"),
            dim,
        })
    }

    pub fn with_id(mut self, id: &str) -> Self {
        self.id = id.to_string();
        self
    }

    fn vector(&self, text: &str) -> Result<Vec<f64>, EmbeddingError> {
        let mut values = vec![0.0; self.dim];
        let mut tokens = 0usize;
        for token in text
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
        {
            let token = token.to_lowercase();
            let bucket = (fnv1a64(token.as_bytes()) % self.dim as u64) as usize;
            values[bucket] += 1.0;
            tokens += 1;
        }
        if tokens == 0 {
            return Err(EmbeddingError::NoTokens(text.to_string()));
        }
        Ok(values)
    }
}

impl EmbeddingProvider for HashingProvider {
    fn provider_id(&self) -> &str {
        &self.id
    }

    fn dimension(&self) -> Option<usize> {
        Some(self.dim)
    }

    fn embed_texts(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
        texts.iter().map(|t| self.vector(t)).collect()
    }
}

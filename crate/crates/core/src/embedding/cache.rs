use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{EmbeddingError, EmbeddingProvider};

#[derive(Debug, Serialize, Deserialize)]
struct CacheRecord {
    provider_id: String,
    dim: usize,
    text_sha256: String,
    values: Vec<f64>,
}

pub fn text_sha256(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

type Key = (String, String);

/// Embedding store keyed on `(provider_id, sha256(text))`, optionally backed
/// by a JSON Lines file that new entries are appended to.
#[derive(Debug, Default)]
pub struct EmbeddingCache {
    path: Option<PathBuf>,
    entries: Mutex<HashMap<Key, Vec<f64>>>,
}

impl EmbeddingCache {
    pub fn in_memory() -> Self {
        EmbeddingCache::default()
    }

    /// Open (or create on first write) a JSON Lines cache file.
    pub fn open(path: &Path) -> Result<Self, EmbeddingError> {
        let cache_err = |message: String| EmbeddingError::Cache {
            path: path.display().to_string(),
            message,
        };
        let mut entries = HashMap::new();
        if path.exists() {
            let file = File::open(path).map_err(|e| cache_err(e.to_string()))?;
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| cache_err(e.to_string()))?;
                if line.trim().is_empty() {
                    continue;
                }
                let record: CacheRecord = serde_json::from_str(&line)
                    .map_err(|e| cache_err(format!("line {}: {e}", i + 1)))?;
                if record.values.len() != record.dim {
                    return Err(cache_err(format!("line {}: dim mismatch", i + 1)));
                }
                entries.insert((record.provider_id, record.text_sha256), record.values);
            }
        }
        Ok(EmbeddingCache {
            path: Some(path.to_path_buf()),
            entries: Mutex::new(entries),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn lookup(&self, provider_id: &str, texts: &[&str]) -> Vec<Option<Vec<f64>>> {
        let entries = self.entries.lock().expect("cache lock");
        texts
            .iter()
            .map(|t| {
                entries
                    .get(&(provider_id.to_string(), text_sha256(t)))
                    .cloned()
            })
            .collect()
    }

    /// Insert computed vectors; an entry already present wins so concurrent
    /// writers of the same key all observe one value.
    fn store(
        &self,
        provider_id: &str,
        items: Vec<(&str, Vec<f64>)>,
    ) -> Result<Vec<Vec<f64>>, EmbeddingError> {
        let mut entries = self.entries.lock().expect("cache lock");
        let mut fresh = Vec::new();
        let mut out = Vec::with_capacity(items.len());
        for (text, values) in items {
            let key = (provider_id.to_string(), text_sha256(text));
            let stored = entries.entry(key.clone()).or_insert_with(|| {
                fresh.push(CacheRecord {
                    provider_id: key.0.clone(),
                    dim: values.len(),
                    text_sha256: key.1.clone(),
                    values: values.clone(),
                });
                values
            });
            out.push(stored.clone());
        }
        if let (Some(path), false) = (&self.path, fresh.is_empty()) {
            let cache_err = |message: String| EmbeddingError::Cache {
                path: path.display().to_string(),
                message,
            };
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| cache_err(e.to_string()))?;
            }
            let mut file = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| cache_err(e.to_string()))?;
            let mut buf = String::new();
            for record in &fresh {
                buf.push_str(&serde_json::to_string(record).expect("serializable record"));
                buf.push('\n');
            }
            file.write_all(buf.as_bytes())
                .map_err(|e| cache_err(e.to_string()))?;
        }
        Ok(out)
    }
}

/// A provider wrapper that consults an [`EmbeddingCache`] before calling through.
pub struct CachedProvider<P> {
    inner: P,
    cache: Arc<EmbeddingCache>,
}

impl<P: EmbeddingProvider> CachedProvider<P> {
    pub fn new(inner: P, cache: Arc<EmbeddingCache>) -> Self {
        CachedProvider { inner, cache }
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }
}

impl<P: EmbeddingProvider> EmbeddingProvider for CachedProvider<P> {
    fn provider_id(&self) -> &str {
        self.inner.provider_id()
    }

    fn dimension(&self) -> Option<usize> {
        self.inner.dimension()
    }

    fn embed_texts(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
        let id = self.inner.provider_id();
        let mut found = self.cache.lookup(id, texts);
        let missing: Vec<usize> = (0..texts.len()).filter(|&i| found[i].is_none()).collect();
        if !missing.is_empty() {
            let miss_texts: Vec<&str> = missing.iter().map(|&i| texts[i]).collect();
            let computed = self.inner.embed_texts(&miss_texts)?;
            if computed.len() != miss_texts.len() {
                return Err(EmbeddingError::InvalidVector {
                    provider_id: id.to_string(),
                    message: format!("{} vectors for {} texts", computed.len(), miss_texts.len()),
                });
            }
            let stored = self
                .cache
                .store(id, miss_texts.into_iter().zip(computed).collect())?;
            for (i, values) in missing.into_iter().zip(stored) {
                found[i] = Some(values);
            }
        }
        Ok(found
            .into_iter()
            .map(|v| v.expect("filled above"))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{embed_batch, HashingProvider};
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Counting {
        inner: HashingProvider,
        calls: AtomicUsize,
    }

    impl EmbeddingProvider for Counting {
        fn provider_id(&self) -> &str {
            self.inner.provider_id()
        }
        fn dimension(&self) -> Option<usize> {
            self.inner.dimension()
        }
        fn embed_texts(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
            self.calls.fetch_add(texts.len(), Ordering::SeqCst);
            self.inner.embed_texts(texts)
        }
    }

    #[test]
    fn cached_equals_uncached_and_persists() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/cache.jsonl");
        let plain = HashingProvider::new(16).unwrap();
        let texts = [
            "demolition of buildings",
            "growing of rice",
            "demolition of buildings",
        ];

        let counting = Counting {
            inner: plain.clone(),
            calls: AtomicUsize::new(0),
        };
        let cached = CachedProvider::new(counting, Arc::new(EmbeddingCache::open(&path).unwrap()));
        let a = embed_batch(&cached, &texts).unwrap();
        assert_eq!(a, embed_batch(&plain, &texts).unwrap());
        // duplicate text inside one batch is computed by the provider but stored once
        assert_eq!(cached.inner().calls.load(Ordering::SeqCst), 3);
        embed_batch(&cached, &texts).unwrap();
        assert_eq!(cached.inner().calls.load(Ordering::SeqCst), 3);

        let lines = std::fs::read_to_string(&path).unwrap();
        assert_eq!(lines.lines().count(), 2);
        let record: serde_json::Value =
            serde_json::from_str(lines.lines().next().unwrap()).unwrap();
        for key in ["provider_id", "dim", "text_sha256", "values"] {
            assert!(record.get(key).is_some(), "missing {key}");
        }

        let reopened = EmbeddingCache::open(&path).unwrap();
        assert_eq!(reopened.len(), 2);
        let counting = Counting {
            inner: plain,
            calls: AtomicUsize::new(0),
        };
        let cached = CachedProvider::new(counting, Arc::new(reopened));
        assert_eq!(embed_batch(&cached, &texts).unwrap(), a);
        assert_eq!(cached.inner().calls.load(Ordering::SeqCst), 0);
    }

    #[test]
    fn keys_are_per_provider() {
        let cache = Arc::new(EmbeddingCache::in_memory());
        let a = CachedProvider::new(HashingProvider::new(8).unwrap(), cache.clone());
        let b = CachedProvider::new(HashingProvider::new(4).unwrap(), cache.clone());
        embed_batch(&a, &["x"]).unwrap();
        embed_batch(&b, &["x"]).unwrap();
        assert_eq!(cache.len(), 2);
    }

    #[test]
    fn sha_is_hex_of_utf8() {
        assert_eq!(
            text_sha256("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}

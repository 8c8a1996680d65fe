//! The persisted result of a pipeline run.
//!
//! A bundle directory holds:
//!
//! | file | contents |
//! |------|----------|
//! | `weights.json` | head weights, training config and training metrics |
//! | `selection.json`, `selection.txt` | provider scores and the winner |
//! | `evaluation.json`, `evaluation.txt` | test-split evaluation report |
//! | `config.json` | the pipeline config snapshot |
//! | `taxonomy.csv` | the taxonomy the labels were drawn from |
//! | `split.json` | seed, fraction and the test indices |
//! | `stages.log` | one line per pipeline stage, in run order |

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::Dataset;
use crate::embedding::{embed_batch, EmbeddingProvider};
use crate::head::{HeadWeights, TrainConfig, TrainHistory};
use crate::metrics::{classification_report, EvaluationReport};
use crate::pipeline::PipelineConfig;
use crate::selection::SelectionReport;
use crate::taxonomy::{parse_taxonomy, IsicCode, Taxonomy};
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMetrics {
    pub steps: usize,
    pub initial_loss: f64,
    pub final_train_loss: f64,
    pub epoch_train_loss: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub epoch_eval_accuracy: Vec<f64>,
}

impl From<&TrainHistory> for TrainMetrics {
    fn from(h: &TrainHistory) -> Self {
        TrainMetrics {
            steps: h.step_losses.len(),
            initial_loss: h.step_losses.first().copied().unwrap_or(f64::NAN),
            final_train_loss: h.epoch_train_loss.last().copied().unwrap_or(f64::NAN),
            epoch_train_loss: h.epoch_train_loss.clone(),
            epoch_eval_accuracy: h.epoch_eval_accuracy.clone(),
        }
    }
}

/// On-disk form of a trained head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsFile {
    pub schema_version: u32,
    pub provider_id: String,
    pub dim: usize,
    pub labels: Vec<IsicCode>,
    #[serde(rename = "W")]
    pub weights: Vec<f64>,
    #[serde(rename = "b")]
    pub bias: Vec<f64>,
    pub train_config: TrainConfig,
    pub metrics: TrainMetrics,
}

impl WeightsFile {
    pub fn new(head: &HeadWeights, train_config: &TrainConfig, metrics: TrainMetrics) -> Self {
        WeightsFile {
            schema_version: SCHEMA_VERSION,
            provider_id: head.provider_id.clone(),
            dim: head.dim,
            labels: head.labels.clone(),
            weights: head.weights.clone(),
            bias: head.bias.clone(),
            train_config: train_config.clone(),
            metrics,
        }
    }

    /// Validated head; shapes must agree with `labels` and `dim`.
    pub fn head(&self) -> Result<HeadWeights> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Bundle(format!(
                "unsupported schema_version {}",
                self.schema_version
            )));
        }
        let head = HeadWeights {
            labels: self.labels.clone(),
            weights: self.weights.clone(),
            bias: self.bias.clone(),
            provider_id: self.provider_id.clone(),
            dim: self.dim,
        };
        head.check_shape()?;
        Ok(head)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("weights serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: WeightsFile =
            serde_json::from_str(text).map_err(|e| Error::Bundle(format!("weights.json: {e}")))?;
        file.head()?;
        Ok(file)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitRecord {
    pub seed: u64,
    pub test_fraction: f64,
    pub test_indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub weights: WeightsFile,
    pub selection: SelectionReport,
    pub evaluation: EvaluationReport,
    pub config: PipelineConfig,
    pub taxonomy: Taxonomy,
    pub split: SplitRecord,
    pub stages: Vec<String>,
}

fn pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

impl ModelBundle {
    pub fn head(&self) -> Result<HeadWeights> {
        self.weights.head()
    }

    /// File name and contents of every bundle file, in a fixed order.
    pub fn files(&self) -> Vec<(&'static str, String)> {
        let mut weights = self.weights.to_json();
        weights.push('\n');
        let mut stages = self.stages.join("\n");
        stages.push('\n');
        vec![
            ("weights.json", weights),
            ("selection.json", pretty(&self.selection)),
            ("selection.txt", self.selection.render_table()),
            ("evaluation.json", pretty(&self.evaluation)),
            ("evaluation.txt", self.evaluation.render()),
            ("config.json", pretty(&self.config)),
            ("taxonomy.csv", self.taxonomy.to_csv()),
            ("split.json", pretty(&self.split)),
            ("stages.log", stages),
        ]
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, contents) in self.files() {
            let path = dir.join(name);
            std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let read = |name: &str| {
            let path = dir.join(name);
            std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))
        };
        fn json<T: serde::de::DeserializeOwned>(name: &str, text: &str) -> Result<T> {
            serde_json::from_str(text).map_err(|e| Error::Bundle(format!("{name}: {e}")))
        }
        let weights = WeightsFile::from_json(&read("weights.json")?)?;
        let taxonomy = parse_taxonomy(&read("taxonomy.csv")?)?;
        let bundle = ModelBundle {
            weights,
            selection: json("selection.json", &read("selection.json")?)?,
            evaluation: json("evaluation.json", &read("evaluation.json")?)?,
            config: json("config.json", &read("config.json")?)?,
            taxonomy,
            split: json("split.json", &read("split.json")?)?,
            stages: read("stages.log")
                .map(|s| s.lines().map(str::to_string).collect())
                .unwrap_or_default(),
        };
        if let Some(missing) = bundle
            .weights
            .labels
            .iter()
            .find(|l| !bundle.taxonomy.contains(l))
        {
            return Err(Error::Bundle(format!(
                "label {missing} is not in taxonomy.csv"
            )));
        }
        Ok(bundle)
    }

    /// Short content digest of the weights file.
    pub fn version(&self) -> String {
        let digest = Sha256::digest(self.weights.to_json().as_bytes());
        format!("{SCHEMA_VERSION}-{}", &hex::encode(digest)[..12])
    }

    /// Connect the provider the head was trained against, from the config snapshot.
    pub fn provider(&self) -> Result<Box<dyn EmbeddingProvider>> {
        let spec = self
            .config
            .providers
            .iter()
            .find(|p| p.id == self.weights.provider_id)
            .ok_or_else(|| {
                Error::Bundle(format!(
                    "config snapshot has no descriptor for provider {}",
                    self.weights.provider_id
                ))
            })?;
        Ok(spec.connect()?)
    }
}

/// Top-1 predictions for every example of `dataset`, then the full report.
pub fn evaluate_bundle<P: EmbeddingProvider + ?Sized>(
    bundle: &ModelBundle,
    provider: &P,
    dataset: &Dataset,
) -> Result<EvaluationReport> {
    let head = bundle.head()?;
    if provider.provider_id() != head.provider_id {
        return Err(Error::ProviderMismatch {
            bundle: head.provider_id.clone(),
            given: provider.provider_id().to_string(),
        });
    }
    if let Some(e) = dataset
        .examples
        .iter()
        .find(|e| head.label_index(&e.label).is_none())
    {
        return Err(Error::UnknownLabel(e.label.to_string()));
    }
    let vectors = embed_batch(provider, &dataset.texts())?;
    let mut predictions = Vec::with_capacity(vectors.len());
    for v in &vectors {
        let top = head.rank(v.as_slice(), 1)?;
        predictions.push(top.into_iter().next().expect("top_n = 1").0);
    }
    Ok(classification_report(
        &dataset.labels(),
        &predictions,
        &head.labels,
    )?)
}

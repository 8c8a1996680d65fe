//! End-to-end run: ingest, coarsen, select a provider, split, embed, train,
//! evaluate and persist a [`ModelBundle`].

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::info;
use serde::{Deserialize, Serialize};

use crate::bundle::{ModelBundle, SplitRecord, TrainMetrics, WeightsFile};
use crate::dataset::{
    coarsen_to_division, label_space, load_examples_file, stratified_split, Dataset,
};
use crate::embedding::{
    embed_batch, CachedProvider, EmbeddingCache, EmbeddingProvider, EmbeddingVector, ProviderSpec,
};
use crate::head::{train_head, TrainConfig};
use crate::metrics::classification_report;
use crate::selection::select_model;
use crate::taxonomy::{parse_taxonomy, IsicCode};
use crate::{Error, Result};

/// Environment variable overriding where the embedding cache lives.
pub const CACHE_ENV: &str = "ISIC_ENGINE_CACHE";

fn default_test_fraction() -> f64 {
    0.2
}

/// Which examples the provider-selection phase is scored on.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhaseOneSet {
    /// Every example, coarsened to division level.
    #[default]
    Corpus,
    /// Only the training partition of the split.
    Train,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub taxonomy: PathBuf,
    pub dataset: PathBuf,
    pub providers: Vec<ProviderSpec>,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub train: TrainConfig,
    pub output: PathBuf,
    #[serde(default)]
    pub phase1_eval_set: PhaseOneSet,
    /// Free-form ISIC revision label (e.g. "Rev.4"), kept in the bundle's config snapshot.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub taxonomy_revision: Option<String>,
}

impl PipelineConfig {
    /// Parse JSON or TOML (chosen by extension, JSON first otherwise).
    /// Relative paths are resolved against the config file's directory.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        let parsed: Result<Self> = match ext {
            "toml" => toml::from_str(&text).map_err(|e| Error::Config(e.to_string())),
            "json" => serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string())),
            _ => serde_json::from_str(&text)
                .or_else(|_| toml::from_str(&text))
                .map_err(|e| Error::Config(e.to_string())),
        };
        let mut config = parsed?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut config.taxonomy,
            &mut config.dataset,
            &mut config.output,
        ] {
            if p.is_relative() && !p.as_os_str().is_empty() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.taxonomy.as_os_str().is_empty() {
            return bad("taxonomy path is empty".into());
        }
        if self.dataset.as_os_str().is_empty() {
            return bad("dataset path is empty".into());
        }
        if self.output.as_os_str().is_empty() {
            return bad("output path is empty".into());
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad(format!(
                "test_fraction {} outside (0, 1)",
                self.test_fraction
            ));
        }
        if self.providers.is_empty() {
            return bad("no providers configured".into());
        }
        for (i, p) in self.providers.iter().enumerate() {
            if self.providers[..i].iter().any(|q| q.id == p.id) {
                return bad(format!("duplicate provider id {}", p.id));
            }
            p.connect()?;
        }
        self.train.validate()?;
        Ok(())
    }

    fn cache_path(&self) -> PathBuf {
        std::env::var_os(CACHE_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| self.output.join("cache").join("embeddings.jsonl"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    ValidateConfig,
    ParseTaxonomy,
    LoadExamples,
    CoarsenToDivision,
    SelectModel,
    StratifiedSplit,
    Embed,
    TrainHead,
    Evaluate,
    Persist,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::ValidateConfig => "validate_config",
            Stage::ParseTaxonomy => "parse_taxonomy",
            Stage::LoadExamples => "load_examples",
            Stage::CoarsenToDivision => "coarsen_to_division",
            Stage::SelectModel => "select_model",
            Stage::StratifiedSplit => "stratified_split",
            Stage::Embed => "embed",
            Stage::TrainHead => "train_head",
            Stage::Evaluate => "evaluate",
            Stage::Persist => "persist",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, thiserror::Error)]
#[error("stage {stage} failed: {source}")]
pub struct PipelineError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

/// Knobs that are not part of the persisted config.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Skip the comparison and train with this provider id only.
    pub fixed_provider: Option<String>,
}

struct Run {
    stage: Stage,
    log: Vec<String>,
    partial: Vec<(&'static str, String)>,
}

impl Run {
    fn enter(&mut self, stage: Stage) {
        self.stage = stage;
    }

    fn record(&mut self, message: String) {
        let line = format!("{}: {message}", self.stage);
        info!("{line}");
        self.log.push(line);
    }

    fn fail<T>(&self, source: impl Into<Error>) -> std::result::Result<T, PipelineError> {
        Err(PipelineError {
            stage: self.stage,
            source: source.into(),
        })
    }
}

trait StageResult<T> {
    fn at(self, run: &Run) -> std::result::Result<T, PipelineError>;
}

impl<T, E: Into<Error>> StageResult<T> for std::result::Result<T, E> {
    fn at(self, run: &Run) -> std::result::Result<T, PipelineError> {
        self.or_else(|e| run.fail(e))
    }
}

pub fn run_pipeline(config: &PipelineConfig) -> std::result::Result<ModelBundle, PipelineError> {
    run_pipeline_with(config, &RunOptions::default())
}

/// Run every stage and save the bundle to `config.output`.
///
/// On failure the files produced so far and an `error.txt` naming the
/// stage are written under `config.output/failed/`.
pub fn run_pipeline_with(
    config: &PipelineConfig,
    options: &RunOptions,
) -> std::result::Result<ModelBundle, PipelineError> {
    let mut run = Run {
        stage: Stage::ValidateConfig,
        log: Vec::new(),
        partial: Vec::new(),
    };
    let result = execute(config, options, &mut run);
    if let Err(err) = &result {
        if err.stage != Stage::ValidateConfig {
            write_failure(&config.output, err, &run);
        }
    }
    result
}

fn write_failure(output: &Path, err: &PipelineError, run: &Run) {
    let dir = output.join("failed");
    if std::fs::create_dir_all(&dir).is_err() {
        return;
    }
    let mut log = run.log.join("\n");
    log.push('\n');
    let _ = std::fs::write(dir.join("stages.log"), log);
    for (name, contents) in &run.partial {
        let _ = std::fs::write(dir.join(name), contents);
    }
    let _ = std::fs::write(
        dir.join("error.txt"),
        format!("stage: {}\nerror: {}\n", err.stage, err.source),
    );
}

fn embed_labeled<P: EmbeddingProvider + ?Sized>(
    provider: &P,
    dataset: &Dataset,
) -> Result<Vec<(EmbeddingVector, IsicCode)>> {
    let vectors = embed_batch(provider, &dataset.texts())?;
    Ok(vectors
        .into_iter()
        .zip(dataset.examples.iter().map(|e| e.label.clone()))
        .collect())
}

fn execute(
    config: &PipelineConfig,
    options: &RunOptions,
    run: &mut Run,
) -> std::result::Result<ModelBundle, PipelineError> {
    config.validate().at(run)?;
    let specs: Vec<&ProviderSpec> = match &options.fixed_provider {
        Some(id) => {
            let spec = config.providers.iter().find(|p| &p.id == id);
            vec![spec
                .ok_or_else(|| Error::Config(format!("no provider with id {id}")))
                .at(run)?]
        }
        None => config.providers.iter().collect(),
    };
    let cache = match EmbeddingCache::open(&config.cache_path()) {
        Ok(c) => Arc::new(c),
        Err(e) => return run.fail(e),
    };
    let mut providers = Vec::with_capacity(specs.len());
    for spec in &specs {
        providers.push(CachedProvider::new(spec.connect().at(run)?, cache.clone()));
    }

    run.enter(Stage::ParseTaxonomy);
    let taxonomy_text = std::fs::read_to_string(&config.taxonomy)
        .map_err(|e| Error::io(&config.taxonomy, e))
        .at(run)?;
    let taxonomy = parse_taxonomy(&taxonomy_text).at(run)?;
    run.record(format!("{} nodes", taxonomy.len()));

    run.enter(Stage::LoadExamples);
    let mut dataset = load_examples_file(&config.dataset).at(run)?;
    dataset.source = None;
    let classes = label_space(&dataset).at(run)?;
    run.record(format!(
        "{} examples, {} classes",
        dataset.len(),
        classes.len()
    ));

    run.enter(Stage::CoarsenToDivision);
    let coarse = coarsen_to_division(&dataset).at(run)?;
    let divisions = label_space(&coarse).at(run)?;
    run.record(format!("{} divisions", divisions.len()));

    run.enter(Stage::SelectModel);
    let phase_one_set = match config.phase1_eval_set {
        PhaseOneSet::Corpus => coarse,
        PhaseOneSet::Train => {
            let split = stratified_split(&dataset, config.test_fraction, config.seed).at(run)?;
            coarse.select(&split.train_indices)
        }
    };
    let refs: Vec<&dyn EmbeddingProvider> = providers
        .iter()
        .map(|p| p as &dyn EmbeddingProvider)
        .collect();
    let selection = select_model(&refs, &taxonomy, &phase_one_set).at(run)?;
    for s in &selection.scores {
        run.record(format!(
            "{} accuracy {:.4} on {} examples",
            s.provider_id, s.accuracy, s.evaluated_count
        ));
    }
    run.record(format!("winner {}", selection.winner));
    run.partial
        .push(("selection.txt", selection.render_table()));
    let winner = providers
        .iter()
        .find(|p| p.provider_id() == selection.winner)
        .expect("winner is one of the candidates");

    run.enter(Stage::StratifiedSplit);
    let split = stratified_split(&dataset, config.test_fraction, config.seed).at(run)?;
    run.record(format!(
        "{} train, {} test",
        split.train.len(),
        split.test.len()
    ));
    let split_record = SplitRecord {
        seed: config.seed,
        test_fraction: config.test_fraction,
        test_indices: split.test_indices.clone(),
    };

    run.enter(Stage::Embed);
    let train_vectors = embed_labeled(winner, &split.train).at(run)?;
    let test_vectors = embed_labeled(winner, &split.test).at(run)?;
    let dim = train_vectors.first().map(|(v, _)| v.dim()).unwrap_or(0);
    run.record(format!(
        "{} texts with {} (dim {dim})",
        train_vectors.len() + test_vectors.len(),
        selection.winner
    ));

    run.enter(Stage::TrainHead);
    let eval = (!test_vectors.is_empty()).then_some(test_vectors.as_slice());
    let (head, history) = train_head(
        &train_vectors,
        &classes.labels,
        &selection.winner,
        &config.train,
        eval,
    )
    .at(run)?;
    let metrics = TrainMetrics::from(&history);
    run.record(format!(
        "{} steps, loss {:.6} -> {:.6}",
        metrics.steps, metrics.initial_loss, metrics.final_train_loss
    ));

    run.enter(Stage::Evaluate);
    let mut predictions = Vec::with_capacity(test_vectors.len());
    for (v, _) in &test_vectors {
        let top = head.rank(v.as_slice(), 1).at(run)?;
        predictions.push(top.into_iter().next().expect("top_n = 1").0);
    }
    let truths: Vec<&IsicCode> = test_vectors.iter().map(|(_, l)| l).collect();
    let evaluation = classification_report(&truths, &predictions, &head.labels).at(run)?;
    run.record(format!(
        "{} test examples, accuracy {:.4}",
        evaluation.n, evaluation.accuracy
    ));

    run.enter(Stage::Persist);
    let mut snapshot = config.clone();
    snapshot.output = PathBuf::from(".");
    if let Some(id) = &options.fixed_provider {
        snapshot.providers.retain(|p| &p.id == id);
    }
    let mut bundle = ModelBundle {
        weights: WeightsFile::new(&head, &config.train, metrics),
        selection,
        evaluation,
        config: snapshot,
        taxonomy,
        split: split_record,
        stages: Vec::new(),
    };
    run.record("bundle written".to_string());
    bundle.stages = run.log.clone();
    bundle.save(&config.output).at(run)?;
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config() -> PipelineConfig {
        PipelineConfig {
            taxonomy: "t.csv".into(),
            dataset: "d.csv".into(),
            providers: vec![ProviderSpec::new("h", "hashing:8")],
            test_fraction: 0.2,
            seed: 1,
            train: TrainConfig::default(),
            output: "out".into(),
            phase1_eval_set: PhaseOneSet::Corpus,
            taxonomy_revision: None,
        }
    }

    #[test]
    fn validation() {
        assert!(config().validate().is_ok());
        let mut c = config();
        c.test_fraction = 1.5;
        assert!(c.validate().is_err());
        let mut c = config();
        c.providers.push(ProviderSpec::new("h", "hashing:4"));
        assert!(c.validate().is_err());
        let mut c = config();
        c.taxonomy = PathBuf::new();
        assert!(c.validate().is_err());
        let mut c = config();
        c.train.epochs = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn config_formats_and_unknown_keys() {
        let dir = tempfile::tempdir().unwrap();
        let toml_path = dir.path().join("c.toml");
        std::fs::write(
            &toml_path,
            "taxonomy = \"t.csv\"\ndataset = \"d.csv\"\noutput = \"out\"\n\n[[providers]]\nid = \"h\"\nsource = \"hashing:8\"\n\n[train]\nepochs = 5\n",
        )
        .unwrap();
        let c = PipelineConfig::from_path(&toml_path).unwrap();
        assert_eq!(c.train.epochs, 5);
        assert_eq!(c.train.learning_rate, 0.001);
        assert_eq!(c.taxonomy, dir.path().join("t.csv"));

        let json_path = dir.path().join("c.json");
        std::fs::write(
            &json_path,
            r#"{"taxonomy":"t.csv","dataset":"d.csv","output":"o","providers":[{"id":"h","source":"hashing:8"}],"colour":"red"}"#,
        )
        .unwrap();
        let err = PipelineConfig::from_path(&json_path).unwrap_err();
        assert!(err.to_string().contains("colour"), "{err}");
    }
}

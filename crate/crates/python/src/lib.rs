use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use isic_core::embedding::{self, EmbeddingProvider, EmbeddingVector};
use isic_core::head::{self, TrainConfig};
use isic_core::metrics;
use isic_core::pipeline::{run_pipeline_with, RunOptions};
use isic_core::{bundle, dataset, taxonomy, IsicCode, ModelBundle, PipelineConfig};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn code(text: &str) -> PyResult<IsicCode> {
    IsicCode::parse(text).map_err(value_err)
}

fn vector(values: Vec<f64>) -> PyResult<EmbeddingVector> {
    EmbeddingVector::new(values).map_err(value_err)
}

#[pyclass(name = "Taxonomy", frozen)]
struct PyTaxonomy {
    inner: taxonomy::Taxonomy,
}

#[pymethods]
impl PyTaxonomy {
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Ok(PyTaxonomy {
            inner: taxonomy::parse_taxonomy(text).map_err(value_err)?,
        })
    }

    #[staticmethod]
    fn from_file(path: PathBuf) -> PyResult<Self> {
        let text = std::fs::read_to_string(&path).map_err(value_err)?;
        Self::parse(&text)
    }

    fn ancestors(&self, code_text: &str) -> PyResult<Vec<String>> {
        let chain = self.inner.ancestors(&code(code_text)?).map_err(value_err)?;
        Ok(chain.into_iter().map(String::from).collect())
    }

    fn describe(&self, code_text: &str) -> PyResult<String> {
        Ok(self
            .inner
            .describe(&code(code_text)?)
            .map_err(value_err)?
            .to_string())
    }

    fn children(&self, code_text: &str) -> PyResult<Vec<String>> {
        Ok(self
            .inner
            .children(&code(code_text)?)
            .iter()
            .map(|c| c.to_string())
            .collect())
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

#[pyfunction]
fn division_of(code_text: &str) -> PyResult<String> {
    Ok(taxonomy::division_of(&code(code_text)?)
        .map_err(value_err)?
        .to_string())
}

#[pyclass(name = "HashingProvider", frozen)]
struct PyHashingProvider {
    inner: embedding::HashingProvider,
}

#[pymethods]
impl PyHashingProvider {
    #[new]
    #[pyo3(signature = (dim, provider_id=None))]
    fn new(dim: usize, provider_id: Option<&str>) -> PyResult<Self> {
        let mut inner = embedding::HashingProvider::new(dim).map_err(value_err)?;
        if let Some(id) = provider_id {
            inner = inner.with_id(id);
        }
        Ok(PyHashingProvider { inner })
    }

    #[getter]
    fn provider_id(&self) -> String {
        self.inner.provider_id().to_string()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dimension().unwrap_or(0)
    }

    fn embed(&self, text: &str) -> PyResult<Vec<f64>> {
        Ok(embedding::embed(&self.inner, text)
            .map_err(value_err)?
            .into_inner())
    }
}

#[pyfunction]
fn cosine_similarity(u: Vec<f64>, v: Vec<f64>) -> PyResult<f64> {
    embedding::cosine_similarity(&vector(u)?, &vector(v)?).map_err(value_err)
}

fn report_dict<'py>(
    py: Python<'py>,
    report: &metrics::EvaluationReport,
) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("accuracy", report.accuracy)?;
    d.set_item("precision_weighted", report.precision_weighted)?;
    d.set_item("recall_weighted", report.recall_weighted)?;
    d.set_item("f1_weighted", report.f1_weighted)?;
    d.set_item("one_vs_rest_accuracy", report.one_vs_rest_accuracy)?;
    d.set_item("n", report.n)?;
    let rows = report
        .per_class
        .iter()
        .map(|r| {
            let row = PyDict::new(py);
            row.set_item("label", &r.label)?;
            row.set_item("precision", r.precision)?;
            row.set_item("recall", r.recall)?;
            row.set_item("f1", r.f1)?;
            row.set_item("support", r.support)?;
            Ok(row)
        })
        .collect::<PyResult<Vec<_>>>()?;
    d.set_item("per_class", rows)?;
    d.set_item("headline", report.render_headline())?;
    Ok(d)
}

/// Support-weighted evaluation of `predictions` against `truths` over `labels`.
#[pyfunction]
fn classification_report<'py>(
    py: Python<'py>,
    truths: Vec<String>,
    predictions: Vec<String>,
    labels: Vec<String>,
) -> PyResult<Bound<'py, PyDict>> {
    let report =
        metrics::classification_report(&truths, &predictions, &labels).map_err(value_err)?;
    report_dict(py, &report)
}

#[pyclass(name = "Head", frozen)]
struct PyHead {
    inner: head::HeadWeights,
    history: head::TrainHistory,
}

#[pymethods]
impl PyHead {
    /// Train a softmax head on precomputed vectors.
    #[staticmethod]
    #[pyo3(signature = (vectors, targets, labels, provider_id="external", learning_rate=0.001, epochs=30, batch_size=32, seed=0))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        vectors: Vec<Vec<f64>>,
        targets: Vec<String>,
        labels: Vec<String>,
        provider_id: &str,
        learning_rate: f64,
        epochs: usize,
        batch_size: usize,
        seed: u64,
    ) -> PyResult<Self> {
        if vectors.len() != targets.len() {
            return Err(value_err(format!(
                "{} vectors but {} targets",
                vectors.len(),
                targets.len()
            )));
        }
        let data = vectors
            .into_iter()
            .zip(&targets)
            .map(|(v, t)| Ok((vector(v)?, code(t)?)))
            .collect::<PyResult<Vec<_>>>()?;
        let labels = labels
            .iter()
            .map(|l| code(l))
            .collect::<PyResult<Vec<_>>>()?;
        let config = TrainConfig {
            learning_rate,
            epochs,
            batch_size,
            shuffle_seed: seed,
            ..TrainConfig::default()
        };
        let (inner, history) =
            head::train_head(&data, &labels, provider_id, &config, None).map_err(value_err)?;
        Ok(PyHead { inner, history })
    }

    #[getter]
    fn labels(&self) -> Vec<String> {
        self.inner.labels.iter().map(|l| l.to_string()).collect()
    }

    #[getter]
    fn step_losses(&self) -> Vec<f64> {
        self.history.step_losses.clone()
    }

    #[getter]
    fn epoch_losses(&self) -> Vec<f64> {
        self.history.epoch_train_loss.clone()
    }

    fn forward(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.forward(&x).map_err(value_err)
    }

    #[pyo3(signature = (x, top_n=5))]
    fn rank(&self, x: Vec<f64>, top_n: usize) -> PyResult<Vec<(String, f64)>> {
        let ranked = self.inner.rank(&x, top_n).map_err(value_err)?;
        Ok(ranked
            .into_iter()
            .map(|(c, p)| (c.to_string(), p))
            .collect())
    }
}

#[pyclass(name = "Bundle", frozen)]
struct PyBundle {
    inner: ModelBundle,
    provider: Box<dyn EmbeddingProvider>,
}

#[pymethods]
impl PyBundle {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let inner = ModelBundle::load(&path).map_err(value_err)?;
        let provider = inner.provider().map_err(value_err)?;
        Ok(PyBundle { inner, provider })
    }

    #[getter]
    fn version(&self) -> String {
        self.inner.version()
    }

    #[getter]
    fn provider_id(&self) -> String {
        self.inner.weights.provider_id.clone()
    }

    #[getter]
    fn labels(&self) -> Vec<String> {
        self.inner
            .weights
            .labels
            .iter()
            .map(|l| l.to_string())
            .collect()
    }

    #[pyo3(signature = (text, top_n=5))]
    fn classify(&self, py: Python<'_>, text: &str, top_n: usize) -> PyResult<Vec<(String, f64)>> {
        let weights = self.inner.head().map_err(value_err)?;
        let provider = &self.provider;
        let ranked = py
            .detach(|| head::predict(&weights, provider, text, top_n))
            .map_err(value_err)?;
        Ok(ranked
            .into_iter()
            .map(|(c, p)| (c.to_string(), p))
            .collect())
    }

    fn evaluate<'py>(&self, py: Python<'py>, data: PathBuf) -> PyResult<Bound<'py, PyDict>> {
        let dataset = dataset::load_examples_file(&data).map_err(value_err)?;
        let report =
            bundle::evaluate_bundle(&self.inner, &self.provider, &dataset).map_err(value_err)?;
        report_dict(py, &report)
    }

    fn selection_table(&self) -> String {
        self.inner.selection.render_table()
    }
}

/// Run the full pipeline from a config file; returns the bundle directory.
#[pyfunction]
#[pyo3(signature = (config_path, output=None, provider=None))]
fn run_pipeline(
    py: Python<'_>,
    config_path: PathBuf,
    output: Option<PathBuf>,
    provider: Option<String>,
) -> PyResult<String> {
    let mut config = PipelineConfig::from_path(&config_path).map_err(value_err)?;
    if let Some(output) = output {
        config.output = output;
    }
    let options = RunOptions {
        fixed_provider: provider,
    };
    py.detach(|| run_pipeline_with(&config, &options))
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(config.output.display().to_string())
}

#[pymodule]
pub fn isic_engine(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTaxonomy>()?;
    m.add_class::<PyHashingProvider>()?;
    m.add_class::<PyHead>()?;
    m.add_class::<PyBundle>()?;
    m.add_function(wrap_pyfunction!(division_of, m)?)?;
    m.add_function(wrap_pyfunction!(cosine_similarity, m)?)?;
    m.add_function(wrap_pyfunction!(classification_report, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    Ok(())
}

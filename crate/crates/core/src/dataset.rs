//! Labeled activity descriptions, label spaces and stratified splitting.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::taxonomy::{IsicCode, Level};

#[derive(Debug, Error, PartialEq)]
pub enum DatasetError {
    #[error("dataset header must be `activity_name,isic_class`, found {0:?}")]
    MissingHeader(String),
    #[error("empty activity name at row {0}")]
    EmptyActivity(u64),
    #[error("malformed ISIC code {code:?} at row {row}")]
    MalformedLabel { row: u64, code: String },
    #[error("empty dataset")]
    Empty,
    #[error("label {0} is not below division level")]
    NotCoarsenable(String),
    #[error("test fraction {0} outside (0, 1)")]
    BadFraction(f64),
    #[error("csv: {0}")]
    Csv(String),
    #[error("reading {path}: {message}")]
    Io { path: String, message: String },
}

impl From<csv::Error> for DatasetError {
    fn from(e: csv::Error) -> Self {
        DatasetError::Csv(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub activity_name: String,
    pub label: IsicCode,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Dataset {
    pub examples: Vec<LabeledExample>,
    /// Where the rows came from, if they came from a file.
    pub source: Option<String>,
}

impl Dataset {
    pub fn new(examples: Vec<LabeledExample>) -> Self {
        Dataset {
            examples,
            source: None,
        }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn texts(&self) -> Vec<&str> {
        self.examples
            .iter()
            .map(|e| e.activity_name.as_str())
            .collect()
    }

    pub fn labels(&self) -> Vec<&IsicCode> {
        self.examples.iter().map(|e| &e.label).collect()
    }

    /// Subset by ingestion index, keeping the given order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            examples: indices.iter().map(|&i| self.examples[i].clone()).collect(),
            source: self.source.clone(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer
            .write_record(["activity_name", "isic_class"])
            .expect("in-memory write");
        for e in &self.examples {
            writer
                .write_record([e.activity_name.as_str(), e.label.as_str()])
                .expect("in-memory write");
        }
        String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("utf-8 input")
    }
}

/// Parse the dataset CSV (`activity_name,isic_class`). Names are whitespace-trimmed only.
pub fn load_examples(source: &str) -> Result<Dataset, DatasetError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(source.as_bytes());
    let header = reader.headers()?.clone();
    let found: Vec<String> = header
        .iter()
        .map(|h| h.trim().to_ascii_lowercase())
        .collect();
    if found != ["activity_name", "isic_class"] {
        return Err(DatasetError::MissingHeader(
            header.iter().collect::<Vec<_>>().join(","),
        ));
    }
    let mut examples = Vec::new();
    for record in reader.records() {
        let record = record?;
        let row = record.position().map(|p| p.line()).unwrap_or(0);
        let name = record.get(0).unwrap_or("").trim();
        if name.is_empty() {
            return Err(DatasetError::EmptyActivity(row));
        }
        let raw = record.get(1).unwrap_or("").trim();
        let label = IsicCode::parse(raw).map_err(|_| DatasetError::MalformedLabel {
            row,
            code: raw.to_string(),
        })?;
        examples.push(LabeledExample {
            activity_name: name.to_string(),
            label,
        });
    }
    Ok(Dataset::new(examples))
}

pub fn load_examples_file(path: &Path) -> Result<Dataset, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|e| DatasetError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let mut dataset = load_examples(&text)?;
    dataset.source = Some(path.display().to_string());
    Ok(dataset)
}

/// Sorted unique labels and their supports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LabelSpace {
    pub labels: Vec<IsicCode>,
    pub supports: Vec<usize>,
}

impl LabelSpace {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, code: &IsicCode) -> Option<usize> {
        self.labels.binary_search(code).ok()
    }
}

pub fn label_space(dataset: &Dataset) -> Result<LabelSpace, DatasetError> {
    if dataset.is_empty() {
        return Err(DatasetError::Empty);
    }
    let mut counts: BTreeMap<&IsicCode, usize> = BTreeMap::new();
    for e in &dataset.examples {
        *counts.entry(&e.label).or_default() += 1;
    }
    Ok(LabelSpace {
        labels: counts.keys().map(|c| (*c).clone()).collect(),
        supports: counts.values().copied().collect(),
    })
}

/// Replace every Group/Class label with its Division.
pub fn coarsen_to_division(dataset: &Dataset) -> Result<Dataset, DatasetError> {
    let examples = dataset
        .examples
        .iter()
        .map(|e| match e.label.level() {
            Level::Group | Level::Class => Ok(LabeledExample {
                activity_name: e.activity_name.clone(),
                label: e.label.division().expect("digit code"),
            }),
            _ => Err(DatasetError::NotCoarsenable(e.label.to_string())),
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Dataset {
        examples,
        source: dataset.source.clone(),
    })
}

/// A train/test partition together with the ingestion indices it was cut from.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Dataset,
    pub test: Dataset,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

/// Number of test examples for a label with support `support`.
///
/// Singletons stay in train; otherwise `floor(support * fraction)`. The small
/// epsilon absorbs products like `0.29 * 100 = 28.999999999999996`.
pub fn test_count(support: usize, test_fraction: f64) -> usize {
    if support < 2 {
        return 0;
    }
    let n = (support as f64 * test_fraction + 1e-9).floor() as usize;
    n.min(support - 1)
}

/// Per-label seeded split. Both halves keep ingestion order.
pub fn stratified_split(
    dataset: &Dataset,
    test_fraction: f64,
    seed: u64,
) -> Result<Split, DatasetError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(DatasetError::BadFraction(test_fraction));
    }
    if dataset.is_empty() {
        return Err(DatasetError::Empty);
    }
    let mut by_label: BTreeMap<&IsicCode, Vec<usize>> = BTreeMap::new();
    for (i, e) in dataset.examples.iter().enumerate() {
        by_label.entry(&e.label).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut is_test = vec![false; dataset.len()];
    for indices in by_label.values_mut() {
        let n_test = test_count(indices.len(), test_fraction);
        indices.shuffle(&mut rng);
        for &i in &indices[..n_test] {
            is_test[i] = true;
        }
    }
    let (test_indices, train_indices): (Vec<usize>, Vec<usize>) =
        (0..dataset.len()).partition(|&i| is_test[i]);
    Ok(Split {
        train: dataset.select(&train_indices),
        test: dataset.select(&test_indices),
        train_indices,
        test_indices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example(name: &str, label: &str) -> LabeledExample {
        LabeledExample {
            activity_name: name.into(),
            label: IsicCode::parse(label).unwrap(),
        }
    }

    #[test]
    fn loads_and_trims() {
        let ds =
            load_examples("activity_name,isic_class\n  demolition of buildings ,4311\n").unwrap();
        assert_eq!(
            ds.examples,
            vec![example("demolition of buildings", "4311")]
        );
    }

    #[test]
    fn load_errors() {
        assert_eq!(
            load_examples("activity_name,isic_class\nok,4311\n\"  \",4311\n"),
            Err(DatasetError::EmptyActivity(3))
        );
        let err = load_examples("activity_name,isic_class\nmilling,43x1\n").unwrap_err();
        assert!(err.to_string().contains("malformed ISIC code"));
        assert!(matches!(
            load_examples("name,code\nmilling,4311\n"),
            Err(DatasetError::MissingHeader(_))
        ));
    }

    #[test]
    fn label_space_counts() {
        let ds = Dataset::new(vec![
            example("a", "4311"),
            example("b", "4311"),
            example("c", "0111"),
        ]);
        let space = label_space(&ds).unwrap();
        assert_eq!(
            space.labels,
            vec![
                IsicCode::parse("0111").unwrap(),
                IsicCode::parse("4311").unwrap()
            ]
        );
        assert_eq!(space.supports, vec![1, 2]);
        let single = label_space(&Dataset::new(vec![example("x", "4311")])).unwrap();
        assert_eq!(single.supports, vec![1]);
        assert_eq!(label_space(&Dataset::default()), Err(DatasetError::Empty));
    }

    #[test]
    fn coarsening() {
        let ds = Dataset::new(vec![
            example("demolition", "4311"),
            example("site prep", "431"),
        ]);
        let coarse = coarsen_to_division(&ds).unwrap();
        assert!(coarse.examples.iter().all(|e| e.label.as_str() == "43"));
        assert_eq!(coarse.texts(), ds.texts());
        assert_eq!(
            coarsen_to_division(&coarse),
            Err(DatasetError::NotCoarsenable("43".into()))
        );
    }

    #[test]
    fn split_counts_follow_floor_rule() {
        // Oracle: floor(s * f) with s = 10, f = 0.2 is 2.
        let ds = Dataset::new((0..10).map(|i| example(&format!("t{i}"), "4311")).collect());
        for seed in 0..5 {
            let split = stratified_split(&ds, 0.2, seed).unwrap();
            assert_eq!((split.train.len(), split.test.len()), (8, 2));
        }
        for (s, f, expected) in [
            (1, 0.5, 0),
            (2, 0.5, 1),
            (3, 0.5, 1),
            (100, 0.29, 29),
            (5, 0.99, 4),
        ] {
            assert_eq!(test_count(s, f), expected, "s={s} f={f}");
        }
    }

    #[test]
    fn singleton_goes_to_train() {
        let ds = Dataset::new(vec![
            example("a", "4311"),
            example("b", "0111"),
            example("c", "0111"),
        ]);
        let split = stratified_split(&ds, 0.5, 7).unwrap();
        assert!(split.train_indices.contains(&0));
        assert_eq!(split.test.len(), 1);
    }

    #[test]
    fn split_rejects_bad_fraction() {
        let ds = Dataset::new(vec![example("a", "4311")]);
        for f in [0.0, 1.0, 1.5, -0.1, f64::NAN] {
            assert!(matches!(
                stratified_split(&ds, f, 0),
                Err(DatasetError::BadFraction(_))
            ));
        }
    }
}

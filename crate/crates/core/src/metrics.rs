//! Multi-class evaluation: one-vs-rest confusion tallies, accuracy,
//! per-class precision/recall/F1 and support-weighted aggregates.
//!
//! `accuracy` is the fraction of correct predictions. The literal
//! "sum of TP+TN over classes" ratio is kept separately as
//! [`one_vs_rest_accuracy`]; for more than two classes it counts every
//! correctly rejected class as a hit and so exceeds `accuracy`.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("{truths} truths but {predictions} predictions")]
    LengthMismatch { truths: usize, predictions: usize },
    #[error("label {0} is not in the label set")]
    UnknownLabel(String),
    #[error("duplicate label {0} in the label set")]
    DuplicateLabel(String),
    #[error("no samples to evaluate")]
    Empty,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassTally {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionTally {
    pub labels: Vec<String>,
    pub counts: Vec<ClassTally>,
    pub n: usize,
}

impl ConfusionTally {
    pub fn correct(&self) -> usize {
        self.counts.iter().map(|c| c.tp).sum()
    }
}

pub fn confusion_tallies<T, P, K>(
    truths: &[T],
    predictions: &[P],
    labels: &[K],
) -> Result<ConfusionTally, MetricsError>
where
    T: AsRef<str>,
    P: AsRef<str>,
    K: AsRef<str>,
{
    if truths.len() != predictions.len() {
        return Err(MetricsError::LengthMismatch {
            truths: truths.len(),
            predictions: predictions.len(),
        });
    }
    let mut index: HashMap<&str, usize> = HashMap::with_capacity(labels.len());
    for (i, k) in labels.iter().enumerate() {
        if index.insert(k.as_ref(), i).is_some() {
            return Err(MetricsError::DuplicateLabel(k.as_ref().to_string()));
        }
    }
    let lookup = |s: &str| {
        index
            .get(s)
            .copied()
            .ok_or_else(|| MetricsError::UnknownLabel(s.to_string()))
    };
    let n = truths.len();
    let mut counts = vec![ClassTally::default(); labels.len()];
    for (t, p) in truths.iter().zip(predictions) {
        let (t, p) = (lookup(t.as_ref())?, lookup(p.as_ref())?);
        if t == p {
            counts[t].tp += 1;
        } else {
            counts[t].fn_ += 1;
            counts[p].fp += 1;
        }
    }
    for c in &mut counts {
        c.tn = n - c.tp - c.fp - c.fn_;
    }
    Ok(ConfusionTally {
        labels: labels.iter().map(|k| k.as_ref().to_string()).collect(),
        counts,
        n,
    })
}

/// Correct predictions over all predictions.
pub fn accuracy<T: AsRef<str>, P: AsRef<str>>(
    truths: &[T],
    predictions: &[P],
) -> Result<f64, MetricsError> {
    if truths.len() != predictions.len() {
        return Err(MetricsError::LengthMismatch {
            truths: truths.len(),
            predictions: predictions.len(),
        });
    }
    if truths.is_empty() {
        return Err(MetricsError::Empty);
    }
    let correct = truths
        .iter()
        .zip(predictions)
        .filter(|(t, p)| t.as_ref() == p.as_ref())
        .count();
    Ok(correct as f64 / truths.len() as f64)
}

/// Σ(TP+TN) / Σ(TP+TN+FP+FN) over all classes.
pub fn one_vs_rest_accuracy(tally: &ConfusionTally) -> Result<f64, MetricsError> {
    if tally.n == 0 {
        return Err(MetricsError::Empty);
    }
    let hits: usize = tally.counts.iter().map(|c| c.tp + c.tn).sum();
    let all: usize = tally
        .counts
        .iter()
        .map(|c| c.tp + c.tn + c.fp + c.fn_)
        .sum();
    Ok(hits as f64 / all as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRow {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub rows: Vec<ClassRow>,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Per-class precision, recall and F1; any 0/0 is taken as 0.
pub fn per_class_prf(tally: &ConfusionTally) -> Result<ClassMetrics, MetricsError> {
    if tally.n == 0 {
        return Err(MetricsError::Empty);
    }
    let rows = tally
        .labels
        .iter()
        .zip(&tally.counts)
        .map(|(label, c)| {
            let (tp, fp, fn_) = (c.tp as f64, c.fp as f64, c.fn_ as f64);
            let precision = ratio(tp, tp + fp);
            let recall = ratio(tp, tp + fn_);
            ClassRow {
                label: label.clone(),
                precision,
                recall,
                f1: ratio(2.0 * precision * recall, precision + recall),
                support: c.tp + c.fn_,
            }
        })
        .collect();
    Ok(ClassMetrics { rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Support-weighted means of the per-class scores.
pub fn weighted_aggregate(metrics: &ClassMetrics) -> Result<WeightedScores, MetricsError> {
    let total: usize = metrics.rows.iter().map(|r| r.support).sum();
    if total == 0 {
        return Err(MetricsError::Empty);
    }
    let weighted = |f: fn(&ClassRow) -> f64| {
        metrics
            .rows
            .iter()
            .map(|r| f(r) * r.support as f64)
            .sum::<f64>()
            / total as f64
    };
    Ok(WeightedScores {
        precision: weighted(|r| r.precision),
        recall: weighted(|r| r.recall),
        f1: weighted(|r| r.f1),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub accuracy: f64,
    pub precision_weighted: f64,
    pub recall_weighted: f64,
    pub f1_weighted: f64,
    pub one_vs_rest_accuracy: f64,
    pub n: usize,
    pub per_class: Vec<ClassRow>,
}

pub fn classification_report<T, P, K>(
    truths: &[T],
    predictions: &[P],
    labels: &[K],
) -> Result<EvaluationReport, MetricsError>
where
    T: AsRef<str>,
    P: AsRef<str>,
    K: AsRef<str>,
{
    let tally = confusion_tallies(truths, predictions, labels)?;
    let per_class = per_class_prf(&tally)?;
    let weighted = weighted_aggregate(&per_class)?;
    Ok(EvaluationReport {
        accuracy: accuracy(truths, predictions)?,
        precision_weighted: weighted.precision,
        recall_weighted: weighted.recall,
        f1_weighted: weighted.f1,
        one_vs_rest_accuracy: one_vs_rest_accuracy(&tally)?,
        n: tally.n,
        per_class: per_class.rows,
    })
}

fn pct(x: f64) -> String {
    format!("{:.2}%", x * 100.0)
}

impl EvaluationReport {
    /// The four headline metrics as a two-line table.
    pub fn render_headline(&self) -> String {
        let heads = [
            "Accuracy",
            "Precision weighted",
            "Recall weighted",
            "F1 weighted",
        ];
        let values = [
            self.accuracy,
            self.precision_weighted,
            self.recall_weighted,
            self.f1_weighted,
        ]
        .map(pct);
        let widths: Vec<usize> = heads.iter().map(|h| h.len()).collect();
        let mut out = String::new();
        let line = |cells: &[String]| {
            cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect::<Vec<_>>()
                .join("  ")
                .trim_end()
                .to_string()
        };
        out.push_str(&line(&heads.map(String::from)));
        out.push('\n');
        out.push_str(&line(&values));
        out.push('\n');
        out
    }

    /// Headline plus the per-class table and the one-vs-rest diagnostic.
    pub fn render(&self) -> String {
        let mut out = self.render_headline();
        let width = self
            .per_class
            .iter()
            .map(|r| r.label.len())
            .max()
            .unwrap_or(0)
            .max(5);
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "{:<width$}  {:>9}  {:>9}  {:>9}  {:>7}",
            "class", "precision", "recall", "f1", "support"
        );
        for r in &self.per_class {
            let _ = writeln!(
                out,
                "{:<width$}  {:>9.4}  {:>9.4}  {:>9.4}  {:>7}",
                r.label, r.precision, r.recall, r.f1, r.support
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "samples: {}  one-vs-rest accuracy: {}",
            self.n,
            pct(self.one_vs_rest_accuracy)
        );
        out
    }
}

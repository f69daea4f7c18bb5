//! Weighted-F1 evaluation, baselines and the cross-subject benchmark matrix.

mod knn;
mod matrix;
mod metrics;
mod report;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::Domain;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::ClassifierNet;
use crate::trainer::EpochRecord;

pub use knn::KnnClassifier;
pub use matrix::{run_matrix, BenchConfig, MatrixCell};
pub use metrics::{weighted_f1, ClassMetrics, ConfusionMatrix};
pub use report::{curve_table, render_table, table_rows, ReferenceTable, TableRow, TABLE_COLUMNS};

/// Anything that labels feature windows.
pub trait Predictor: Sync {
    fn n_classes(&self) -> usize;
    fn predict(&self, x: &Matrix) -> Result<Vec<usize>>;
}

impl Predictor for ClassifierNet {
    fn n_classes(&self) -> usize {
        ClassifierNet::n_classes(self)
    }

    fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        ClassifierNet::predict(self, x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub confusion: ConfusionMatrix,
    pub per_class: Vec<ClassMetrics>,
    pub weighted_f1: f64,
}

impl Evaluation {
    pub fn from_confusion(confusion: ConfusionMatrix) -> Result<Self> {
        Ok(Self {
            per_class: confusion.per_class(),
            weighted_f1: confusion.weighted_f1()?,
            confusion,
        })
    }
}

/// Predicts every window of a labeled test domain and scores the result.
pub fn evaluate(p: &dyn Predictor, test: &Domain) -> Result<Evaluation> {
    let truth = test
        .labels()
        .ok_or_else(|| Error::invalid(format!("test domain {} has no labels", test.subject_id())))?;
    if p.n_classes() != test.n_classes() {
        return Err(Error::shape(
            "evaluate",
            format!(
                "predictor has {} classes, test domain {}",
                p.n_classes(),
                test.n_classes()
            ),
        ));
    }
    let pred = p.predict(test.features())?;
    Evaluation::from_confusion(ConfusionMatrix::from_predictions(truth, &pred, test.n_classes())?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    NoTransfer,
    KnnPca,
    Sagan,
    Supervised,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::NoTransfer, Mode::KnnPca, Mode::Sagan, Mode::Supervised];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::NoTransfer => "no-transfer",
            Mode::KnnPca => "knn-pca",
            Mode::Sagan => "sagan",
            Mode::Supervised => "supervised",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| {
            Error::invalid(format!(
                "unknown mode {s}; expected one of no-transfer, knn-pca, sagan, supervised"
            ))
        })
    }
}

/// One evaluated (source, target, mode) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub source_id: String,
    pub target_id: String,
    pub mode: Mode,
    pub confusion: ConfusionMatrix,
    pub per_class: Vec<ClassMetrics>,
    pub weighted_f1: f64,
    /// Estimated W1 between the source and target training features.
    pub wasserstein: Option<f64>,
    /// Run seed; per-cell seeds are derived from it.
    pub seed: u64,
    pub config_digest: String,
    #[serde(default)]
    pub degraded: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curve: Option<Vec<EpochRecord>>,
}

impl EvalReport {
    pub fn new(
        source_id: impl Into<String>,
        target_id: impl Into<String>,
        mode: Mode,
        eval: Evaluation,
        seed: u64,
        config_digest: impl Into<String>,
    ) -> Self {
        Self {
            source_id: source_id.into(),
            target_id: target_id.into(),
            mode,
            confusion: eval.confusion,
            per_class: eval.per_class,
            weighted_f1: eval.weighted_f1,
            wasserstein: None,
            seed,
            config_digest: config_digest.into(),
            degraded: false,
            curve: None,
        }
    }

    /// Pretty JSON with a trailing newline; field order is fixed, so equal
    /// reports serialize to identical bytes.
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map(|s| s + "\n")
            .map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("report: {e}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Recovery {
    /// `sagan / supervised`.
    pub ratio: f64,
    /// `(sagan - no_transfer) / (supervised - no_transfer)` when the gap is positive.
    pub recovered_gap: Option<f64>,
}

pub fn relative_recovery(sagan: &EvalReport, supervised: &EvalReport, no_transfer: &EvalReport) -> Result<Recovery> {
    let pair = |r: &EvalReport| (r.source_id.clone(), r.target_id.clone());
    if pair(sagan) != pair(supervised) || pair(sagan) != pair(no_transfer) {
        return Err(Error::invalid("reports describe different (source, target) pairs"));
    }
    recovery_from_scores(sagan.weighted_f1, supervised.weighted_f1, no_transfer.weighted_f1)
}

pub fn recovery_from_scores(sagan: f64, supervised: f64, no_transfer: f64) -> Result<Recovery> {
    if supervised == 0.0 {
        return Err(Error::invalid("supervised weighted F1 is zero"));
    }
    let gap = supervised - no_transfer;
    Ok(Recovery {
        ratio: sagan / supervised,
        recovered_gap: (gap > 0.0).then(|| (sagan - no_transfer) / gap),
    })
}

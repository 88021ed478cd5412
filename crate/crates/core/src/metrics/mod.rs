//! Confusion matrix, accuracy / precision / recall / F1, ROC curve and AUC,
//! and the per-class classification report.

mod confusion;
mod roc;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use confusion::ConfusionMatrix;
pub use roc::{roc_auc, roc_curve, RocPoint};

use crate::data::Label;
use crate::error::Result;
use crate::io::write_atomic;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

/// Aggregate metrics report positive-class (Cancer) precision, recall and F1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub confusion: ConfusionMatrix,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub roc_auc: f64,
    /// Indexed by label: `[non_cancer, cancer]`.
    pub per_class: [ClassMetrics; 2],
    /// Set whenever a metric hit a zero denominator and was reported as 0.
    pub warnings: Vec<String>,
}

impl MetricsReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        write_atomic(path, text.as_bytes())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| crate::Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn class_metrics(cm: &ConfusionMatrix, name: &str, warnings: &mut Vec<String>) -> ClassMetrics {
    if cm.tp + cm.fp == 0 {
        warnings.push(format!("precision for {name} undefined (no predicted positives); reported as 0"));
    }
    if cm.tp + cm.fn_ == 0 {
        warnings.push(format!("recall for {name} undefined (no actual positives); reported as 0"));
    }
    ClassMetrics {
        precision: cm.precision(),
        recall: cm.recall(),
        f1: cm.f1(),
        support: cm.tp + cm.fn_,
    }
}

/// Full report from true labels, hard predictions and positive-class scores.
pub fn classification_report(y_true: &[Label], y_pred: &[Label], scores: &[f64]) -> Result<MetricsReport> {
    let confusion = ConfusionMatrix::from_predictions(y_true, y_pred)?;
    let roc_auc = roc_auc(y_true, scores)?;
    let mut warnings = Vec::new();
    let negative = class_metrics(&confusion.swapped(), "non_cancer", &mut warnings);
    let positive = class_metrics(&confusion, "cancer", &mut warnings);
    Ok(MetricsReport {
        confusion,
        accuracy: confusion.accuracy(),
        precision: positive.precision,
        recall: positive.recall,
        f1: positive.f1,
        roc_auc,
        per_class: [negative, positive],
        warnings,
    })
}

/// Writes `threshold,fpr,tpr` rows; the leading infinite threshold is `inf`.
pub fn write_roc_csv(path: &Path, curve: &[RocPoint]) -> Result<()> {
    let mut out = String::from("threshold,fpr,tpr\n");
    for p in curve {
        out.push_str(&format!("{},{},{}\n", p.threshold, p.fpr, p.tpr));
    }
    write_atomic(path, out.as_bytes())
}

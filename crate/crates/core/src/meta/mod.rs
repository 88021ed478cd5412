//! Tier 2: concatenated base-learner logits, a standardizer fitted on the
//! meta-training rows only, and class-balanced logistic regression.

mod features;
mod logreg;
mod standardize;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use features::{extract_logits, LogitRecord, MetaFeatures, Provenance};
pub use logreg::{
    compute_class_weights, fit_logreg, fit_logreg_from, objective, sigmoid, LogRegModel, LogRegOptions,
};
pub use standardize::Standardizer;

use crate::data::{Label, NormalizedTensor};
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::vit::TinyViT;

/// Fitted meta-learner: learner order, standardizer and logistic regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaModel {
    pub learner_order: Vec<String>,
    pub standardizer: Standardizer,
    pub logreg: LogRegModel,
}

impl MetaModel {
    /// Fits on meta-training features. Rows tagged with any other
    /// provenance are rejected.
    pub fn fit(train: &MetaFeatures, opts: &LogRegOptions) -> Result<Self> {
        if train.provenance != Provenance::MetaTrain {
            return Err(Error::Data(format!(
                "meta-learner may only be fitted on meta-train rows, got {:?}",
                train.provenance
            )));
        }
        let class_weights = compute_class_weights(&train.labels)?;
        let standardizer = Standardizer::fit(&train.rows)?;
        let x = standardizer.apply(&train.rows)?;
        let logreg = fit_logreg(&x, &train.labels, class_weights, opts)?;
        Ok(Self {
            learner_order: train.learner_order.clone(),
            standardizer,
            logreg,
        })
    }

    fn check_order(&self, order: &[String]) -> Result<()> {
        if order != self.learner_order.as_slice() {
            return Err(Error::Data(format!(
                "learner order {:?} does not match the meta-learner's {:?}",
                order, self.learner_order
            )));
        }
        Ok(())
    }

    /// Cancer probability for each row.
    pub fn predict_proba(&self, features: &MetaFeatures) -> Result<Vec<f64>> {
        self.check_order(&features.learner_order)?;
        Ok(self
            .standardizer
            .apply(&features.rows)?
            .iter()
            .map(|r| self.logreg.probability(r))
            .collect())
    }

    /// `(class, cancer probability)` per row; class 1 iff probability >= 0.5.
    pub fn predict(&self, features: &MetaFeatures) -> Result<Vec<(Label, f64)>> {
        Ok(self
            .predict_proba(features)?
            .into_iter()
            .map(|p| (u8::from(p >= 0.5), p))
            .collect())
    }

    /// End-to-end stacked prediction: every frozen learner runs on the batch,
    /// logits are concatenated in the trained order, standardized and scored.
    pub fn stack_predict(
        &self,
        learners: &[(&str, &TinyViT)],
        batch: &[NormalizedTensor],
    ) -> Result<Vec<(Label, f64)>> {
        let order: Vec<String> = learners.iter().map(|(id, _)| id.to_string()).collect();
        self.check_order(&order)?;
        let mut rows = vec![Vec::with_capacity(2 * learners.len()); batch.len()];
        for (id, model) in learners {
            let logits = model
                .forward(batch)
                .map_err(|e| Error::Shape(format!("learner `{id}`: {e}")))?;
            for (row, l) in rows.iter_mut().zip(logits) {
                row.extend_from_slice(&l.as_array());
            }
        }
        Ok(rows
            .iter()
            .map(|r| {
                let p = self.logreg.probability(&self.standardizer.apply_row(r));
                (u8::from(p >= 0.5), p)
            })
            .collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        write_atomic(path, text.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: Self = serde_json::from_str(&text)?;
        if model.standardizer.width() != 2 * model.learner_order.len()
            || model.logreg.weights.len() != model.standardizer.width()
        {
            return Err(Error::Data(format!("{}: inconsistent meta model widths", path.display())));
        }
        Ok(model)
    }
}

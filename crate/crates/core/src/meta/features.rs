use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{prepare_eval, Dataset, Label, PipelineConfig};
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::vit::TinyViT;

/// Where a block of meta rows came from. Fitting refuses anything but
/// [`Provenance::MetaTrain`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    MetaTrain,
    MetaValidation,
    Inference,
}

/// One row of the logit interchange file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitRecord {
    pub sample_id: String,
    pub label: Label,
    pub learner_id: String,
    pub logit_0: f64,
    pub logit_1: f64,
}

/// `N x 2K` matrix of concatenated base-learner logits.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaFeatures {
    pub sample_ids: Vec<String>,
    /// Row `i` holds `(logit_0, logit_1)` of each learner in `learner_order`.
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<Label>,
    pub learner_order: Vec<String>,
    pub provenance: Provenance,
}

impl MetaFeatures {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn width(&self) -> usize {
        2 * self.learner_order.len()
    }

    /// Columns `2k, 2k+1` for learner `id`.
    pub fn learner_logits(&self, id: &str) -> Option<Vec<[f64; 2]>> {
        let k = self.learner_order.iter().position(|l| l == id)?;
        Some(self.rows.iter().map(|r| [r[2 * k], r[2 * k + 1]]).collect())
    }

    /// Long-format records, sample-major then learner order.
    pub fn to_records(&self) -> Vec<LogitRecord> {
        let mut out = Vec::with_capacity(self.len() * self.learner_order.len());
        for ((id, row), &label) in self.sample_ids.iter().zip(&self.rows).zip(&self.labels) {
            for (k, learner) in self.learner_order.iter().enumerate() {
                out.push(LogitRecord {
                    sample_id: id.clone(),
                    label,
                    learner_id: learner.clone(),
                    logit_0: row[2 * k],
                    logit_1: row[2 * k + 1],
                });
            }
        }
        out
    }

    /// Regroups long-format records into rows. Samples keep first-appearance
    /// order; learners too, unless `learner_order` is given.
    pub fn from_records(
        records: &[LogitRecord],
        provenance: Provenance,
        learner_order: Option<&[String]>,
    ) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Data("no logit records".into()));
        }
        let order: Vec<String> = match learner_order {
            Some(o) => o.to_vec(),
            None => {
                let mut o: Vec<String> = Vec::new();
                for r in records {
                    if !o.contains(&r.learner_id) {
                        o.push(r.learner_id.clone());
                    }
                }
                o
            }
        };
        let column: HashMap<&str, usize> = order.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
        let k = order.len();

        let mut index: HashMap<&str, usize> = HashMap::new();
        let mut sample_ids = Vec::new();
        let mut labels = Vec::new();
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut filled: Vec<Vec<bool>> = Vec::new();
        for r in records {
            if r.label > 1 {
                return Err(Error::Data(format!("sample {}: label {} is not binary", r.sample_id, r.label)));
            }
            let col = *column.get(r.learner_id.as_str()).ok_or_else(|| {
                Error::Data(format!("unexpected learner `{}` for sample {}", r.learner_id, r.sample_id))
            })?;
            let row = *index.entry(r.sample_id.as_str()).or_insert_with(|| {
                sample_ids.push(r.sample_id.clone());
                labels.push(r.label);
                rows.push(vec![f64::NAN; 2 * k]);
                filled.push(vec![false; k]);
                rows.len() - 1
            });
            if labels[row] != r.label {
                return Err(Error::Data(format!("sample {} has conflicting labels", r.sample_id)));
            }
            if std::mem::replace(&mut filled[row][col], true) {
                return Err(Error::Data(format!(
                    "sample {} has two rows for learner {}",
                    r.sample_id, r.learner_id
                )));
            }
            if !(r.logit_0.is_finite() && r.logit_1.is_finite()) {
                return Err(Error::Numerical(format!(
                    "non-finite logit for sample {} / learner {}",
                    r.sample_id, r.learner_id
                )));
            }
            rows[row][2 * col] = r.logit_0;
            rows[row][2 * col + 1] = r.logit_1;
        }
        for (row, f) in filled.iter().enumerate() {
            if let Some(missing) = f.iter().position(|&x| !x) {
                return Err(Error::Data(format!(
                    "sample {} is missing logits from learner {}",
                    sample_ids[row], order[missing]
                )));
            }
        }
        Ok(Self {
            sample_ids,
            rows,
            labels,
            learner_order: order,
            provenance,
        })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in self.to_records() {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
        write_atomic(path, &bytes)
    }

    pub fn read_csv(path: &Path, provenance: Provenance, learner_order: Option<&[String]>) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let headers = rdr.headers()?.clone();
        let expected = ["sample_id", "label", "learner_id", "logit_0", "logit_1"];
        if headers.iter().ne(expected) {
            return Err(Error::Data(format!(
                "{}: expected header {}, found {}",
                path.display(),
                expected.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let records = rdr.deserialize().collect::<std::result::Result<Vec<LogitRecord>, _>>()?;
        Self::from_records(&records, provenance, learner_order)
    }
}

/// Runs every learner in eval mode over `data` and concatenates their
/// logits per sample, in the order given.
pub fn extract_logits(
    learners: &[(&str, &TinyViT)],
    data: &Dataset,
    pipeline: &PipelineConfig,
    provenance: Provenance,
) -> Result<MetaFeatures> {
    if learners.is_empty() {
        return Err(Error::Config("need at least one base learner".into()));
    }
    if data.is_empty() {
        return Err(Error::Data("cannot extract logits from an empty dataset".into()));
    }
    let mut order = Vec::with_capacity(learners.len());
    for (id, model) in learners {
        if order.iter().any(|o: &String| o == id) {
            return Err(Error::Config(format!("duplicate learner id `{id}`")));
        }
        if model.config().image_size != pipeline.target_size {
            return Err(Error::Shape(format!(
                "learner `{id}` expects {}px inputs but the pipeline produces {}px",
                model.config().image_size,
                pipeline.target_size
            )));
        }
        order.push(id.to_string());
    }
    let inputs: Vec<_> = data
        .samples()
        .iter()
        .map(|s| prepare_eval(&s.image, pipeline.target_size))
        .collect();
    let mut rows = vec![Vec::with_capacity(2 * learners.len()); data.len()];
    for (id, model) in learners {
        let logits = model
            .forward(&inputs)
            .map_err(|e| Error::Shape(format!("learner `{id}`: {e}")))?;
        for (row, l) in rows.iter_mut().zip(logits) {
            if !l.is_finite() {
                return Err(Error::Numerical(format!("learner `{id}` produced non-finite logits")));
            }
            row.extend_from_slice(&l.as_array());
        }
    }
    Ok(MetaFeatures {
        sample_ids: data.samples().iter().map(|s| s.id.clone()).collect(),
        rows,
        labels: data.labels(),
        learner_order: order,
        provenance,
    })
}

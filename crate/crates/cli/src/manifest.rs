//! Run manifest: a deterministic summary of an output directory.
//!
//! Rebuilt from disk after every command, so it always describes exactly
//! what is there. Wall-clock timings live in `timing.json`, which is left
//! out of the inventory.

use std::path::Path;

use serde::{Deserialize, Serialize};
use ttstack_core::io::{sha256_file, write_atomic};
use ttstack_core::{Error, MetricsReport, Result};

use crate::config::STACK_ID;
use crate::layout;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerSummary {
    pub id: String,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub best_val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaSummary {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub roc_auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_checksum: Option<String>,
    pub data: Option<serde_json::Value>,
    pub learners: Vec<LearnerSummary>,
    pub meta: Option<MetaSummary>,
    pub files: Vec<FileEntry>,
}

fn excluded(rel: &str) -> bool {
    rel == layout::MANIFEST || rel == layout::TIMING || rel.ends_with(".tmp")
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<()> {
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            let rel = path.strip_prefix(root).expect("walk stays under root");
            let rel = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
            if !excluded(&rel) {
                out.push(rel);
            }
        }
    }
    Ok(())
}

/// Best epoch from a history CSV: lowest val loss, earliest on ties.
fn summarize_history(id: &str, path: &Path) -> Result<LearnerSummary> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = || Error::Data(format!("{}: malformed history", path.display()));
    let mut best: Option<LearnerSummary> = None;
    for line in text.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 6 {
            return Err(bad());
        }
        let epoch: usize = cols[0].parse().map_err(|_| bad())?;
        let loss: f64 = cols[3].parse().map_err(|_| bad())?;
        let acc: f64 = cols[4].parse().map_err(|_| bad())?;
        if best.as_ref().is_none_or(|b| loss < b.best_val_loss) {
            best = Some(LearnerSummary { id: id.to_string(), best_epoch: epoch, best_val_loss: loss, best_val_accuracy: acc });
        }
    }
    best.ok_or_else(bad)
}

impl RunManifest {
    pub fn build(out: &Path) -> Result<Self> {
        let config_path = out.join(layout::RUN_CONFIG);
        let config_checksum = if config_path.exists() { Some(sha256_file(&config_path)?) } else { None };

        let data_path = out.join(layout::DATA_SUMMARY);
        let data = if data_path.exists() {
            let text = std::fs::read_to_string(&data_path).map_err(|e| Error::io(&data_path, e))?;
            Some(serde_json::from_str(&text)?)
        } else {
            None
        };

        let mut learners = Vec::new();
        let history_dir = out.join(layout::HISTORY_DIR);
        if history_dir.is_dir() {
            let mut names: Vec<String> = std::fs::read_dir(&history_dir)
                .map_err(|e| Error::io(&history_dir, e))?
                .filter_map(|e| e.ok())
                .map(|e| e.file_name().to_string_lossy().into_owned())
                .filter(|n| n.ends_with(".csv"))
                .collect();
            names.sort();
            for name in names {
                let id = name.trim_end_matches(".csv");
                learners.push(summarize_history(id, &history_dir.join(&name))?);
            }
        }

        let stack_report = layout::report_path(out, STACK_ID);
        let meta = if stack_report.exists() {
            let r = MetricsReport::read_json(&stack_report)?;
            Some(MetaSummary { accuracy: r.accuracy, precision: r.precision, recall: r.recall, f1: r.f1, roc_auc: r.roc_auc })
        } else {
            None
        };

        let mut rels = Vec::new();
        collect_files(out, out, &mut rels)?;
        rels.sort();
        let files = rels
            .into_iter()
            .map(|rel| {
                let path = out.join(&rel);
                let bytes = std::fs::metadata(&path).map_err(|e| Error::io(&path, e))?.len();
                Ok(FileEntry { sha256: sha256_file(&path)?, path: rel, bytes })
            })
            .collect::<Result<Vec<_>>>()?;

        Ok(Self { config_checksum, data, learners, meta, files })
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Rebuilds and writes `manifest.json`.
    pub fn refresh(out: &Path) -> Result<Self> {
        let m = Self::build(out)?;
        write_atomic(&out.join(layout::MANIFEST), m.to_json()?.as_bytes())?;
        Ok(m)
    }

    pub fn read(out: &Path) -> Result<Self> {
        let path = out.join(layout::MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Checks that every listed file exists with the recorded checksum.
    pub fn verify(&self, out: &Path) -> Result<()> {
        for f in &self.files {
            let path = out.join(&f.path);
            if !path.is_file() {
                return Err(Error::Data(format!("manifest lists missing file {}", f.path)));
            }
            if sha256_file(&path)? != f.sha256 {
                return Err(Error::Data(format!("checksum mismatch for {}", f.path)));
            }
        }
        Ok(())
    }
}

//! File names inside an output directory.

use std::path::{Path, PathBuf};

pub const MANIFEST: &str = "manifest.json";
pub const TIMING: &str = "timing.json";
pub const RUN_CONFIG: &str = "run_config.json";
pub const DATA_SUMMARY: &str = "data_summary.json";
pub const COMPARISON: &str = "comparison.csv";
pub const HISTORY_DIR: &str = "history";
pub const META_MODEL: &str = "meta/meta_model.json";
pub const TRAIN_LOGITS: &str = "logits/train.csv";
pub const VAL_LOGITS: &str = "logits/val.csv";

pub fn checkpoint_path(out: &Path, id: &str) -> PathBuf {
    out.join("checkpoints").join(format!("{id}.ckpt"))
}

pub fn history_path(out: &Path, id: &str) -> PathBuf {
    out.join(HISTORY_DIR).join(format!("{id}.csv"))
}

pub fn report_path(out: &Path, id: &str) -> PathBuf {
    out.join("reports").join(format!("{id}.json"))
}

pub fn roc_path(out: &Path, id: &str) -> PathBuf {
    out.join("roc").join(format!("{id}.csv"))
}

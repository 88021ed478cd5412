//! Run configuration: one flat key/value file drives every command.
//!
//! ```text
//! corpus = "data/synthetic"
//! output_dir = "runs/toy"
//! seed = 42
//! pipeline.target_size = 16
//! train.max_epochs = 30
//! learners[0].id = "narrow"
//! learners[0].patch_size = 4
//! meta.max_iter = 500
//! ```
//!
//! Per-learner init and training seeds are derived from the root seed and
//! the learner id, so adding a learner never perturbs the others.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::Serialize;
use ttstack_core::io::sha256_hex;
use ttstack_core::kv::KvFile;
use ttstack_core::meta::LogRegOptions;
use ttstack_core::rng::derive_seed;
use ttstack_core::{Error, PipelineConfig, Result, TrainConfig, ViTConfig};

/// Reserved name for the stacked model in reports.
pub const STACK_ID: &str = "tt-stack";

const PIPELINE_KEYS: [&str; 5] = ["split_ratio", "target_size", "batch_size", "rotation_limit", "flip_probability"];
const TRAIN_KEYS: [&str; 9] = [
    "learning_rate",
    "weight_decay",
    "beta1",
    "beta2",
    "epsilon",
    "max_epochs",
    "plateau_patience",
    "plateau_factor",
    "min_lr",
];
const LEARNER_KEYS: [&str; 9] = [
    "id",
    "image_size",
    "patch_size",
    "embed_dim",
    "depth",
    "num_heads",
    "mlp_ratio",
    "num_classes",
    "in_channels",
];
const META_KEYS: [&str; 2] = ["max_iter", "tolerance"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LearnerSpec {
    pub id: String,
    pub vit: ViTConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub corpus: PathBuf,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub pipeline: PipelineConfig,
    pub train: TrainConfig,
    pub learners: Vec<LearnerSpec>,
    pub meta: LogRegOptions,
}

#[derive(Serialize)]
struct Canonical<'a> {
    seed: u64,
    pipeline: &'a PipelineConfig,
    train: &'a TrainConfig,
    learners: &'a [LearnerSpec],
    meta: &'a LogRegOptions,
}

pub fn validate_learner_id(id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'));
    if !ok {
        return Err(Error::Config(format!(
            "learner id `{id}` must be non-empty and use only letters, digits, `_`, `-`, `.`"
        )));
    }
    if id == STACK_ID {
        return Err(Error::Config(format!("learner id `{STACK_ID}` is reserved")));
    }
    Ok(())
}

fn check_keys(kv: &KvFile) -> Result<()> {
    for key in kv.keys() {
        let known = match key.split_once('.') {
            None => matches!(key, "corpus" | "output_dir" | "seed"),
            Some(("pipeline", k)) => PIPELINE_KEYS.contains(&k),
            Some(("train", k)) => TRAIN_KEYS.contains(&k),
            Some(("meta", k)) => META_KEYS.contains(&k),
            Some((section, k)) if section.starts_with("learners[") && section.ends_with(']') => {
                LEARNER_KEYS.contains(&k)
            }
            _ => false,
        };
        if !known {
            let hint = if key.ends_with(".seed") { " (seeds derive from the root `seed`)" } else { "" };
            return Err(Error::Config(format!("unknown key `{key}`{hint}")));
        }
    }
    Ok(())
}

impl RunConfig {
    /// Relative paths are resolved against `base_dir`.
    pub fn from_kv(kv: &KvFile, base_dir: &Path) -> Result<Self> {
        check_keys(kv)?;
        let path = |key: &str| -> Result<PathBuf> {
            let raw = kv.get(key).ok_or_else(|| Error::Config(format!("missing required key `{key}`")))?;
            Ok(base_dir.join(raw))
        };
        let corpus = path("corpus")?;
        let output_dir = path("output_dir")?;
        let seed = kv.get_or("seed", 42u64)?;

        let mut pipeline = PipelineConfig::from_kv(kv, "pipeline.")?;
        pipeline.seed = seed;
        let train = TrainConfig::from_kv(kv, "train.")?;

        let count = kv.section_count("learners")?;
        if count == 0 {
            return Err(Error::Config("at least one `learners[i]` section is required".into()));
        }
        let base = ViTConfig { image_size: pipeline.target_size, ..ViTConfig::default() };
        let mut learners = Vec::with_capacity(count);
        let mut seen = HashSet::new();
        for i in 0..count {
            let prefix = format!("learners[{i}].");
            let id = kv
                .get(&format!("{prefix}id"))
                .ok_or_else(|| Error::Config(format!("`{prefix}id` is required")))?
                .to_string();
            validate_learner_id(&id)?;
            if !seen.insert(id.clone()) {
                return Err(Error::Config(format!("duplicate learner id `{id}`")));
            }
            let vit = ViTConfig::from_kv(kv, &prefix, &base).map_err(|e| e.context(format!("learner `{id}`")))?;
            if vit.image_size != pipeline.target_size {
                return Err(Error::Config(format!(
                    "learner `{id}` image_size {} differs from pipeline.target_size {}",
                    vit.image_size, pipeline.target_size
                )));
            }
            learners.push(LearnerSpec { id, vit });
        }

        let defaults = LogRegOptions::default();
        let meta = LogRegOptions {
            max_iter: kv.get_or("meta.max_iter", defaults.max_iter)?,
            tolerance: kv.get_or("meta.tolerance", defaults.tolerance)?,
            ..defaults
        };
        if meta.max_iter == 0 || !(meta.tolerance > 0.0) {
            return Err(Error::Config("meta.max_iter must be >= 1 and meta.tolerance > 0".into()));
        }

        let mut cfg = Self { corpus, output_dir, seed, pipeline, train, learners, meta };
        cfg.reseed(seed);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let kv = KvFile::parse(&text)?;
        Self::from_kv(&kv, path.parent().unwrap_or(Path::new(".")))
    }

    /// Sets the root seed and re-derives every dependent seed.
    pub fn reseed(&mut self, seed: u64) {
        self.seed = seed;
        self.pipeline.seed = seed;
        for l in &mut self.learners {
            l.vit.seed = derive_seed(seed, &format!("init/{}", l.id));
        }
    }

    pub fn learner_ids(&self) -> Vec<String> {
        self.learners.iter().map(|l| l.id.clone()).collect()
    }

    /// Shared protocol with a learner-specific shuffle/augment seed.
    pub fn train_config_for(&self, id: &str) -> TrainConfig {
        TrainConfig { seed: derive_seed(self.seed, &format!("train/{id}")), ..self.train.clone() }
    }

    /// Resolved settings as canonical JSON; paths are left out so the same
    /// experiment in another directory has the same checksum.
    pub fn canonical_json(&self) -> Result<String> {
        let c = Canonical {
            seed: self.seed,
            pipeline: &self.pipeline,
            train: &self.train,
            learners: &self.learners,
            meta: &self.meta,
        };
        let mut s = serde_json::to_string_pretty(&c)?;
        s.push('\n');
        Ok(s)
    }

    pub fn checksum(&self) -> Result<String> {
        Ok(sha256_hex(self.canonical_json()?.as_bytes()))
    }
}

use serde::{Deserialize, Serialize};

use super::transform::{augment, normalize, resize, NormalizedTensor};
use super::{Dataset, Label};
use super::dataset::shuffle;
use crate::error::{Error, Result};
use crate::kv::KvFile;
use crate::rng::substream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub split_ratio: f64,
    pub target_size: usize,
    pub batch_size: usize,
    /// Degrees.
    pub rotation_limit: f64,
    pub flip_probability: f64,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            split_ratio: 0.8,
            target_size: 32,
            batch_size: 64,
            rotation_limit: 5.0,
            flip_probability: 0.5,
            seed: 42,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(Error::Config(format!(
                "split_ratio must lie in (0,1), got {}",
                self.split_ratio
            )));
        }
        if self.target_size == 0 || self.batch_size == 0 {
            return Err(Error::Config("target_size and batch_size must be positive".into()));
        }
        if !(self.rotation_limit >= 0.0) {
            return Err(Error::Config("rotation_limit must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.flip_probability) {
            return Err(Error::Config("flip_probability must lie in [0,1]".into()));
        }
        Ok(())
    }

    /// Reads keys `<prefix>split_ratio`, `<prefix>target_size`, ... with
    /// defaults for anything missing.
    pub fn from_kv(kv: &KvFile, prefix: &str) -> Result<Self> {
        let d = Self::default();
        let cfg = Self {
            split_ratio: kv.get_or(&format!("{prefix}split_ratio"), d.split_ratio)?,
            target_size: kv.get_or(&format!("{prefix}target_size"), d.target_size)?,
            batch_size: kv.get_or(&format!("{prefix}batch_size"), d.batch_size)?,
            rotation_limit: kv.get_or(&format!("{prefix}rotation_limit"), d.rotation_limit)?,
            flip_probability: kv.get_or(&format!("{prefix}flip_probability"), d.flip_probability)?,
            seed: kv.get_or(&format!("{prefix}seed"), d.seed)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Shuffled, augmented.
    Train { epoch: usize },
    /// Dataset order, no randomness.
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub ids: Vec<String>,
    pub inputs: Vec<NormalizedTensor>,
    pub labels: Vec<Label>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Eval-mode preprocessing: resize then normalize.
pub fn prepare_eval(img: &super::GrayImage, target_size: usize) -> NormalizedTensor {
    normalize(&resize(img, target_size))
}

/// Splits `ds` into batches of `cfg.batch_size` (last one may be short).
///
/// Training mode shuffles with a stream keyed on `(seed, epoch)` and
/// augments each sample with its own stream keyed on its position, so the
/// output is a pure function of the arguments.
pub fn make_batches(ds: &Dataset, cfg: &PipelineConfig, mode: Mode, seed: u64) -> Result<Vec<Batch>> {
    if ds.is_empty() {
        return Err(Error::Data("cannot batch an empty dataset".into()));
    }
    let mut order: Vec<usize> = (0..ds.len()).collect();
    if let Mode::Train { epoch } = mode {
        let mut rng = substream(seed, &format!("shuffle/{epoch}"));
        shuffle(&mut order, &mut rng);
    }
    let samples = ds.samples();
    let batches = order
        .chunks(cfg.batch_size)
        .enumerate()
        .map(|(b, chunk)| {
            let mut batch = Batch {
                ids: Vec::with_capacity(chunk.len()),
                inputs: Vec::with_capacity(chunk.len()),
                labels: Vec::with_capacity(chunk.len()),
            };
            for (j, &i) in chunk.iter().enumerate() {
                let s = &samples[i];
                let input = match mode {
                    Mode::Eval => prepare_eval(&s.image, cfg.target_size),
                    Mode::Train { epoch } => {
                        let position = b * cfg.batch_size + j;
                        let mut rng = substream(seed, &format!("augment/{epoch}/{position}"));
                        let aug = augment(&s.image, &mut rng, cfg.flip_probability, cfg.rotation_limit);
                        normalize(&resize(&aug, cfg.target_size))
                    }
                };
                batch.ids.push(s.id.clone());
                batch.inputs.push(input);
                batch.labels.push(s.label);
            }
            batch
        })
        .collect();
    Ok(batches)
}

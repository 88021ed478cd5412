//! Two-class synthetic stand-in corpus: each image is a class-dependent
//! mean intensity plus i.i.d. Gaussian texture.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{ClassMapping, Dataset, GrayImage, Label, LabeledSample};
use crate::error::{Error, Result};
use crate::rng::substream;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub negatives: usize,
    pub positives: usize,
    pub size: usize,
    pub negative_mean: f64,
    pub positive_mean: f64,
    pub texture_std: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            negatives: 620,
            positives: 125,
            size: 32,
            negative_mean: 96.0,
            positive_mean: 160.0,
            texture_std: 24.0,
            seed: 42,
        }
    }
}

impl SyntheticSpec {
    fn image(&self, label: Label, rng: &mut impl Rng) -> GrayImage {
        let mean = if label == 1 { self.positive_mean } else { self.negative_mean };
        let noise = Normal::new(0.0, self.texture_std).expect("texture_std must be finite and >= 0");
        let pixels = (0..self.size * self.size)
            .map(|_| (mean + noise.sample(rng)).round().clamp(0.0, 255.0) as u8)
            .collect();
        GrayImage::new(self.size, self.size, pixels).expect("square image")
    }

    /// In-memory dataset with the same ids [`write_corpus`](Self::write_corpus) produces.
    pub fn generate(&self) -> Result<Dataset> {
        let mapping = ClassMapping::default();
        let mut samples = Vec::with_capacity(self.negatives + self.positives);
        for (label, count) in [(1u8, self.positives), (0u8, self.negatives)] {
            let mut rng = substream(self.seed, &format!("synthetic/{label}"));
            for i in 0..count {
                let id = format!("{}/img_{i:04}.pgm", mapping.names[label as usize]);
                samples.push(LabeledSample::new(id, self.image(label, &mut rng), label)?);
            }
        }
        samples.sort_by(|a, b| a.id.cmp(&b.id));
        Dataset::new(samples, mapping)
    }

    /// Writes `<root>/Cancer/*.pgm` and `<root>/NonCancer/*.pgm`.
    pub fn write_corpus(&self, root: &Path) -> Result<Dataset> {
        let ds = self.generate()?;
        for name in &ds.mapping.names {
            let dir = root.join(name);
            std::fs::create_dir_all(&dir).map_err(|e| Error::Io { path: dir.clone(), source: e })?;
        }
        for s in ds.samples() {
            s.image.write_pgm(&root.join(&s.id))?;
        }
        Ok(ds)
    }
}

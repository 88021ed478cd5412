use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::GrayImage;
use crate::error::{Error, Result};
use crate::rng::substream;

/// Class index: 0 = Non-Cancer, 1 = Cancer (the positive class).
pub type Label = u8;

pub const NEGATIVE: Label = 0;
pub const POSITIVE: Label = 1;

/// Marks an id as a with-replacement copy produced by balancing.
pub const DUPLICATE_MARKER: &str = "#dup";

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub id: String,
    pub image: Arc<GrayImage>,
    pub label: Label,
}

impl LabeledSample {
    pub fn new(id: impl Into<String>, image: GrayImage, label: Label) -> Result<Self> {
        if label > 1 {
            return Err(Error::Data(format!("label {label} is not binary")));
        }
        Ok(Self {
            id: id.into(),
            image: Arc::new(image),
            label,
        })
    }

    /// Id of the original sample this one was copied from.
    pub fn origin_id(&self) -> &str {
        match self.id.find(DUPLICATE_MARKER) {
            Some(i) => &self.id[..i],
            None => &self.id,
        }
    }
}

/// Which directory name maps to which class index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassMapping {
    /// `names[label]` is the directory for that label.
    pub names: [String; 2],
}

impl Default for ClassMapping {
    fn default() -> Self {
        Self {
            names: ["NonCancer".into(), "Cancer".into()],
        }
    }
}

impl ClassMapping {
    /// Maps two directory names to labels.
    ///
    /// Names recognisable as the cancer / non-cancer classes get their
    /// semantic index; anything else falls back to lexicographic order.
    pub fn from_dir_names(a: &str, b: &str) -> Self {
        let (first, second) = if a <= b { (a, b) } else { (b, a) };
        let semantic = |name: &str| -> Option<Label> {
            let folded: String = name
                .chars()
                .filter(|c| c.is_ascii_alphanumeric())
                .collect::<String>()
                .to_ascii_lowercase();
            match folded.as_str() {
                "cancer" | "malignant" | "positive" => Some(POSITIVE),
                "noncancer" | "normal" | "benign" | "negative" => Some(NEGATIVE),
                _ => None,
            }
        };
        match (semantic(first), semantic(second)) {
            (Some(POSITIVE), Some(NEGATIVE)) => Self {
                names: [second.into(), first.into()],
            },
            _ => Self {
                names: [first.into(), second.into()],
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<LabeledSample>,
    class_counts: [usize; 2],
    pub mapping: ClassMapping,
}

impl Dataset {
    pub fn new(samples: Vec<LabeledSample>, mapping: ClassMapping) -> Result<Self> {
        let mut seen = std::collections::HashSet::with_capacity(samples.len());
        let mut class_counts = [0usize; 2];
        for s in &samples {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::Data(format!("duplicate sample id `{}`", s.id)));
            }
            class_counts[s.label as usize] += 1;
        }
        Ok(Self {
            samples,
            class_counts,
            mapping,
        })
    }

    pub fn samples(&self) -> &[LabeledSample] {
        &self.samples
    }

    pub fn class_counts(&self) -> [usize; 2] {
        self.class_counts
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.samples.iter().map(|s| s.label).collect()
    }

    /// Loads `<root>/<class>/*.pgm` from exactly two class directories.
    pub fn load(root: &Path) -> Result<Self> {
        let mut dirs = Vec::new();
        let entries = std::fs::read_dir(root).map_err(|e| Error::io(root, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(root, e))?;
            if entry.file_type().map_err(|e| Error::io(entry.path(), e))?.is_dir() {
                dirs.push(entry.file_name().to_string_lossy().into_owned());
            }
        }
        if dirs.len() != 2 {
            return Err(Error::Data(format!(
                "{} must contain exactly two class directories, found {}: {:?}",
                root.display(),
                dirs.len(),
                dirs
            )));
        }
        let mapping = ClassMapping::from_dir_names(&dirs[0], &dirs[1]);

        let mut files = Vec::new();
        for (label, name) in mapping.names.iter().enumerate() {
            let dir = root.join(name);
            for entry in std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
                let path = entry.map_err(|e| Error::io(&dir, e))?.path();
                if path.is_file() && path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")) {
                    let file = path.file_name().unwrap().to_string_lossy().into_owned();
                    files.push((format!("{name}/{file}"), path, label as Label));
                }
            }
        }
        files.sort_by(|a, b| a.0.cmp(&b.0));

        let samples = files
            .into_iter()
            .map(|(id, path, label)| LabeledSample::new(id, GrayImage::read_pgm(&path)?, label))
            .collect::<Result<Vec<_>>>()?;
        Self::new(samples, mapping)
    }

    fn subset(&self, keep: impl Fn(usize) -> bool) -> Self {
        let samples: Vec<_> = self
            .samples
            .iter()
            .enumerate()
            .filter(|(i, _)| keep(*i))
            .map(|(_, s)| s.clone())
            .collect();
        Self::new(samples, self.mapping.clone()).expect("subset of a valid dataset")
    }

    /// Per-class stratified split; `floor(ratio * count)` of each class goes
    /// to train (at least one sample stays on each side).
    pub fn stratified_split(&self, ratio: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(Error::Config(format!("split ratio must be in (0,1), got {ratio}")));
        }
        for (label, &count) in self.class_counts.iter().enumerate() {
            if count < 2 {
                return Err(Error::Data(format!(
                    "class {label} has {count} sample(s); need at least 2 to split"
                )));
            }
        }
        let mut rng = substream(seed, "split");
        let mut in_train = vec![false; self.samples.len()];
        for label in [NEGATIVE, POSITIVE] {
            let mut members: Vec<usize> = (0..self.samples.len())
                .filter(|&i| self.samples[i].label == label)
                .collect();
            let count = members.len();
            let n_train = ((ratio * count as f64 + 1e-9).floor() as usize).clamp(1, count - 1);
            shuffle(&mut members, &mut rng);
            for &i in &members[..n_train] {
                in_train[i] = true;
            }
        }
        Ok((self.subset(|i| in_train[i]), self.subset(|i| !in_train[i])))
    }

    /// Upsamples the minority class with replacement until both classes
    /// have the majority count. Originals keep their order; copies are
    /// appended with ids suffixed by [`DUPLICATE_MARKER`].
    pub fn balance_by_upsampling(&self, seed: u64) -> Result<Dataset> {
        let [n0, n1] = self.class_counts;
        if n0 == 0 || n1 == 0 {
            return Err(Error::Data(
                "cannot balance a dataset missing one of the classes".into(),
            ));
        }
        let minority = if n0 < n1 { NEGATIVE } else { POSITIVE };
        let deficit = n0.abs_diff(n1);
        let pool: Vec<&LabeledSample> =
            self.samples.iter().filter(|s| s.label == minority).collect();
        let mut rng = substream(seed, "balance");
        let mut samples = self.samples.clone();
        for k in 0..deficit {
            let src = pool[rng.random_range(0..pool.len())];
            samples.push(LabeledSample {
                id: format!("{}{DUPLICATE_MARKER}{k}", src.id),
                image: Arc::clone(&src.image),
                label: minority,
            });
        }
        Self::new(samples, self.mapping.clone())
    }
}

/// Fisher-Yates; written out so the permutation depends only on the stream.
pub(crate) fn shuffle<T>(items: &mut [T], rng: &mut impl Rng) {
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}

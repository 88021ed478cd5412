//! Base-learner training: AdamW on mean cross-entropy, plateau learning-rate
//! halving, a fixed epoch budget, and best-validation-loss checkpointing.

mod adamw;
mod scheduler;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use adamw::{adamw_step, OptimizerState};
pub use scheduler::PlateauScheduler;

use crate::data::{make_batches, prepare_eval, Dataset, Label, Mode, NormalizedTensor, PipelineConfig};
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::kv::KvFile;
use crate::vit::{argmax, sample_cross_entropy, TinyViT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub max_epochs: usize,
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    pub min_lr: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            weight_decay: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            max_epochs: 30,
            plateau_patience: 3,
            plateau_factor: 0.5,
            min_lr: 1e-7,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be > 0".into()));
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return Err(Error::Config("plateau_factor must lie in (0,1)".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be >= 1".into()));
        }
        if !(self.weight_decay >= 0.0 && self.min_lr >= 0.0 && self.epsilon > 0.0) {
            return Err(Error::Config("weight_decay, min_lr must be >= 0 and epsilon > 0".into()));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return Err(Error::Config("beta1 and beta2 must lie in [0,1)".into()));
        }
        Ok(())
    }

    pub fn from_kv(kv: &KvFile, prefix: &str) -> Result<Self> {
        let d = Self::default();
        let key = |k: &str| format!("{prefix}{k}");
        let cfg = Self {
            learning_rate: kv.get_or(&key("learning_rate"), d.learning_rate)?,
            weight_decay: kv.get_or(&key("weight_decay"), d.weight_decay)?,
            beta1: kv.get_or(&key("beta1"), d.beta1)?,
            beta2: kv.get_or(&key("beta2"), d.beta2)?,
            epsilon: kv.get_or(&key("epsilon"), d.epsilon)?,
            max_epochs: kv.get_or(&key("max_epochs"), d.max_epochs)?,
            plateau_patience: kv.get_or(&key("plateau_patience"), d.plateau_patience)?,
            plateau_factor: kv.get_or(&key("plateau_factor"), d.plateau_factor)?,
            min_lr: kv.get_or(&key("min_lr"), d.min_lr)?,
            seed: kv.get_or(&key("seed"), d.seed)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    /// Learning rate in effect during the epoch.
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch of the kept checkpoint.
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

impl TrainHistory {
    pub fn best(&self) -> Option<&EpochRecord> {
        self.epochs.get(self.best_epoch.checked_sub(1)?)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,train_acc,val_loss,val_acc,lr\n");
        for r in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.epoch, r.train_loss, r.train_accuracy, r.val_loss, r.val_accuracy, r.lr
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv().as_bytes())
    }
}

/// Inputs preprocessed once in eval mode (resize + normalize only).
#[derive(Debug, Clone)]
pub struct EvalSet {
    pub inputs: Vec<NormalizedTensor>,
    pub labels: Vec<Label>,
}

impl EvalSet {
    pub fn new(data: &Dataset, pipeline: &PipelineConfig) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Data("cannot evaluate on an empty dataset".into()));
        }
        Ok(Self {
            inputs: data
                .samples()
                .iter()
                .map(|s| prepare_eval(&s.image, pipeline.target_size))
                .collect(),
            labels: data.labels(),
        })
    }

    /// Mean cross-entropy and accuracy of `model` on this set.
    pub fn loss_accuracy(&self, model: &TinyViT) -> Result<(f64, f64)> {
        let logits = model.forward(&self.inputs)?;
        let mut loss = 0.0;
        let mut correct = 0usize;
        for (&l, &y) in logits.iter().zip(&self.labels) {
            loss += sample_cross_entropy(l, y);
            correct += usize::from(argmax(l) == y);
        }
        let n = self.labels.len() as f64;
        Ok((loss / n, correct as f64 / n))
    }
}

/// Eval-mode mean loss and accuracy over `data`.
pub fn evaluate_loss_accuracy(model: &TinyViT, data: &Dataset, pipeline: &PipelineConfig) -> Result<(f64, f64)> {
    EvalSet::new(data, pipeline)?.loss_accuracy(model)
}

/// Trains for `cfg.max_epochs` epochs and returns the weights of the epoch
/// with the lowest validation loss, plus the full history.
pub fn train(
    model: TinyViT,
    train_data: &Dataset,
    val_data: &Dataset,
    pipeline: &PipelineConfig,
    cfg: &TrainConfig,
) -> Result<(TinyViT, TrainHistory)> {
    train_with_observer(model, train_data, val_data, pipeline, cfg, |_| {})
}

pub fn train_with_observer(
    mut model: TinyViT,
    train_data: &Dataset,
    val_data: &Dataset,
    pipeline: &PipelineConfig,
    cfg: &TrainConfig,
    mut observer: impl FnMut(&EpochRecord),
) -> Result<(TinyViT, TrainHistory)> {
    cfg.validate()?;
    if model.config().image_size != pipeline.target_size {
        return Err(Error::Config(format!(
            "model image_size {} differs from pipeline target_size {}",
            model.config().image_size,
            pipeline.target_size
        )));
    }
    let train_eval = EvalSet::new(train_data, pipeline)?;
    let val_eval = EvalSet::new(val_data, pipeline)?;

    let mut state = OptimizerState::new(&model, cfg.learning_rate);
    let mut scheduler = PlateauScheduler::new(cfg.plateau_patience, cfg.plateau_factor, cfg.min_lr);
    let mut history = TrainHistory {
        epochs: Vec::with_capacity(cfg.max_epochs),
        best_epoch: 0,
        best_val_loss: f64::INFINITY,
    };
    let mut best = model.clone();

    for epoch in 1..=cfg.max_epochs {
        let lr = state.current_lr;
        let batches = make_batches(train_data, pipeline, Mode::Train { epoch }, cfg.seed)?;
        for (b, batch) in batches.iter().enumerate() {
            let (loss, grads) = model.backward(&batch.inputs, &batch.labels)?;
            if !loss.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite training loss at epoch {epoch}, batch {}",
                    b + 1
                )));
            }
            adamw_step(&mut model, &grads, &mut state, cfg)
                .map_err(|e| Error::Numerical(format!("epoch {epoch}, batch {}: {e}", b + 1)))?;
        }

        let (train_loss, train_accuracy) = train_eval.loss_accuracy(&model)?;
        let (val_loss, val_accuracy) = val_eval.loss_accuracy(&model)?;
        if !(train_loss.is_finite() && val_loss.is_finite()) {
            return Err(Error::Numerical(format!("non-finite evaluation loss at epoch {epoch}")));
        }
        let record = EpochRecord {
            epoch,
            train_loss,
            train_accuracy,
            val_loss,
            val_accuracy,
            lr,
        };
        history.epochs.push(record);
        observer(&record);

        if val_loss < history.best_val_loss {
            history.best_val_loss = val_loss;
            history.best_epoch = epoch;
            best = model.clone();
        }
        state.current_lr = scheduler.step(val_loss, lr);
    }
    Ok((best, history))
}

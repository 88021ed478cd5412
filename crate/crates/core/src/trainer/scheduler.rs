/// Halves (by `factor`) the learning rate after `patience` consecutive
/// epochs without a strict decrease of the validation loss.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauScheduler {
    patience: usize,
    factor: f64,
    min_lr: f64,
    best: f64,
    bad_epochs: usize,
}

impl PlateauScheduler {
    pub fn new(patience: usize, factor: f64, min_lr: f64) -> Self {
        Self {
            patience,
            factor,
            min_lr,
            best: f64::INFINITY,
            bad_epochs: 0,
        }
    }

    /// Records one epoch's validation loss and returns the lr to use next.
    pub fn step(&mut self, val_loss: f64, lr: f64) -> f64 {
        if val_loss < self.best {
            self.best = val_loss;
            self.bad_epochs = 0;
            return lr;
        }
        self.bad_epochs += 1;
        if self.bad_epochs >= self.patience {
            self.bad_epochs = 0;
            (lr * self.factor).max(self.min_lr)
        } else {
            lr
        }
    }

    pub fn bad_epochs(&self) -> usize {
        self.bad_epochs
    }
}

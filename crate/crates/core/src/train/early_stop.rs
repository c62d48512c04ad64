/// Minimum decrease in the monitored loss that counts as progress.
pub const IMPROVEMENT_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    /// New best loss; snapshot the parameters.
    Improved,
    /// No progress yet, but patience remains.
    Continue,
    /// Patience exhausted.
    Stop,
}

/// Patience-based stopping on a loss that should decrease.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<f64>,
    best_epoch: usize,
    epoch: usize,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: None,
            best_epoch: 0,
            epoch: 0,
            stale: 0,
        }
    }

    /// Records the loss of the next epoch (epochs count from 1).
    pub fn observe(&mut self, loss: f64) -> Verdict {
        self.epoch += 1;
        let improved = match self.best {
            None => true,
            Some(best) => loss < best - IMPROVEMENT_THRESHOLD,
        };
        if improved {
            self.best = Some(loss);
            self.best_epoch = self.epoch;
            self.stale = 0;
            Verdict::Improved
        } else {
            self.stale += 1;
            if self.stale >= self.patience {
                Verdict::Stop
            } else {
                Verdict::Continue
            }
        }
    }

    pub fn best_loss(&self) -> Option<f64> {
        self.best
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

//! Cross-entropy training with Adam, early stopping and evaluation.

mod adam;
mod early_stop;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{default_positive_class, MetricsReport};
use crate::model::{predict, ViTParams, VisionTransformer};
use crate::preprocess::{BatchSource, Prefetcher, Shuffle};
use crate::tensor::{kernels, Real, Tensor};

pub use adam::{adam_step, adam_step_params, AdamState};
pub use early_stop::{EarlyStopping, Verdict, IMPROVEMENT_THRESHOLD};

/// Optimization hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub patience: usize,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 32,
            learning_rate: 1e-4,
            patience: 10,
            seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.patience == 0 {
            return bad("patience must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive and finite");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("Adam betas must lie in [0, 1)");
        }
        if self.adam_eps.is_nan() || self.adam_eps <= 0.0 {
            return bad("Adam epsilon must be positive");
        }
        Ok(())
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    /// Percent, measured on the fly during the epoch.
    pub train_accuracy: f64,
    pub test_loss: f64,
    pub test_accuracy: f64,
    /// Seconds; kept out of the serialized log so that it is reproducible.
    #[serde(skip)]
    pub wall_time: f64,
}

/// Mean cross-entropy of `logits[B×C]` against `labels`, via log-sum-exp.
pub fn cross_entropy<T: Real>(logits: &Tensor<T>, labels: &[usize]) -> Result<T> {
    Ok(kernels::cross_entropy(logits, labels)?.0)
}

/// Softmax of each row, in f64.
fn row_probabilities<T: Real>(logits: &Tensor<T>) -> Vec<f64> {
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.data().chunks(logits.last_dim()) {
        let max = row.iter().map(|v| v.as_f64()).fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v.as_f64() - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        out.extend(exps.iter().map(|e| e / total));
    }
    out
}

/// Outcome of [`evaluate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// Batch-size-weighted mean cross-entropy.
    pub loss: f64,
    pub report: MetricsReport,
    pub predictions: Vec<usize>,
    /// Row-major `n × C` softmax probabilities.
    pub probabilities: Vec<f64>,
}

fn check_data<D: BatchSource + ?Sized>(model: &VisionTransformer, ds: &D, what: &str) -> Result<()> {
    let cfg = model.config();
    if ds.is_empty() {
        return Err(Error::Config(format!("{what} set is empty")));
    }
    if ds.num_classes() != cfg.num_classes {
        return Err(Error::Config(format!(
            "{what} set has {} classes but the model has {}",
            ds.num_classes(),
            cfg.num_classes
        )));
    }
    if ds.channels() != cfg.channels {
        return Err(Error::Config(format!(
            "{what} set has {} channels but the model expects {}",
            ds.channels(),
            cfg.channels
        )));
    }
    Ok(())
}

/// Loss and full metrics of `params` on `ds`, without touching the parameters.
pub fn evaluate<D: BatchSource + ?Sized>(
    model: &VisionTransformer,
    params: &ViTParams<f32>,
    ds: &D,
    cfg: &TrainConfig,
) -> Result<Evaluation> {
    check_data(model, ds, "evaluation")?;
    let side = model.config().image_size;
    let mut loss_sum = 0.0;
    let mut truth = Vec::with_capacity(ds.len());
    let mut predictions = Vec::with_capacity(ds.len());
    let mut probabilities = Vec::with_capacity(ds.len() * ds.num_classes());
    Prefetcher::default().for_each(ds, cfg.batch_size, side, None, |batch| {
        let logits = model.forward(params, &batch.images)?;
        loss_sum += f64::from(cross_entropy(&logits, &batch.labels)?) * batch.len() as f64;
        predictions.extend(predict(&logits));
        probabilities.extend(row_probabilities(&logits));
        truth.extend_from_slice(&batch.labels);
        Ok(())
    })?;
    let loss = loss_sum / truth.len() as f64;
    if !loss.is_finite() {
        return Err(Error::Numerical(format!("evaluation loss is {loss}")));
    }
    let positive = default_positive_class(ds.class_names());
    let report = MetricsReport::compute(&truth, &predictions, &probabilities, ds.num_classes(), positive)?;
    Ok(Evaluation {
        loss,
        report,
        predictions,
        probabilities,
    })
}

/// Passed to the per-epoch callback of [`fit`].
#[derive(Debug)]
pub struct EpochEvent<'a> {
    pub log: &'a EpochLog,
    pub evaluation: &'a Evaluation,
    /// Parameters at the end of this epoch.
    pub params: &'a ViTParams<f32>,
    /// Whether this epoch set a new best test loss.
    pub improved: bool,
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    /// Snapshot from the epoch with the lowest test loss.
    pub best_params: ViTParams<f32>,
    pub best_epoch: usize,
    pub logs: Vec<EpochLog>,
    pub stopped_early: bool,
}

/// Trains from `init` with Adam, evaluating on `test` after every epoch.
///
/// Stops after `cfg.epochs` epochs or once the test loss has not improved by
/// more than [`IMPROVEMENT_THRESHOLD`] for `cfg.patience` epochs in a row.
pub fn fit<A, B, F>(
    model: &VisionTransformer,
    init: ViTParams<f32>,
    train: &A,
    test: &B,
    cfg: &TrainConfig,
    mut on_epoch: F,
) -> Result<FitOutcome>
where
    A: BatchSource + ?Sized,
    B: BatchSource + ?Sized,
    F: FnMut(EpochEvent<'_>) -> Result<()>,
{
    cfg.validate()?;
    check_data(model, train, "training")?;
    check_data(model, test, "test")?;
    init.check_shapes(model.config())?;

    let side = model.config().image_size;
    let mut params = init;
    let mut adam = AdamState::for_params(&params);
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best = params.clone();
    let mut logs = Vec::new();
    let mut stopped_early = false;

    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        let (mut loss_sum, mut correct, mut seen) = (0.0, 0usize, 0usize);
        let shuffle = Shuffle {
            seed: cfg.seed,
            epoch: epoch as u64,
        };
        Prefetcher::default().for_each(train, cfg.batch_size, side, Some(shuffle), |batch| {
            let step = model.loss_and_gradients(&params, &batch.images, &batch.labels)?;
            if !step.loss.is_finite() || step.grads.iter().iter().any(|g| !g.all_finite()) {
                return Err(Error::Numerical(format!(
                    "non-finite loss or gradient in epoch {epoch} (loss {})",
                    step.loss
                )));
            }
            loss_sum += f64::from(step.loss) * batch.len() as f64;
            correct += predict(&step.logits)
                .iter()
                .zip(&batch.labels)
                .filter(|(p, t)| p == t)
                .count();
            seen += batch.len();
            adam_step_params(&mut params, &step.grads, &mut adam, cfg)
        })?;

        let evaluation = evaluate(model, &params, test, cfg)?;
        let log = EpochLog {
            epoch,
            train_loss: loss_sum / seen as f64,
            train_accuracy: 100.0 * correct as f64 / seen as f64,
            test_loss: evaluation.loss,
            test_accuracy: evaluation.report.accuracy,
            wall_time: start.elapsed().as_secs_f64(),
        };
        let verdict = stopper.observe(evaluation.loss);
        let improved = verdict == Verdict::Improved;
        if improved {
            best = params.clone();
        }
        on_epoch(EpochEvent {
            log: &log,
            evaluation: &evaluation,
            params: &params,
            improved,
        })?;
        logs.push(log);
        if verdict == Verdict::Stop {
            stopped_early = epoch < cfg.epochs;
            break;
        }
    }

    Ok(FitOutcome {
        best_params: best,
        best_epoch: stopper.best_epoch(),
        logs,
        stopped_early,
    })
}

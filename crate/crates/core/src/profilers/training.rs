use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{AdamConfig, AdamState};
use crate::store::Exemplar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Patience-based early stopping on a validation loss (lower is better).
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
        }
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn observe(&mut self, epoch: usize, loss: f64) -> StopDecision {
        if loss < self.best {
            self.best = loss;
            self.best_epoch = epoch;
            StopDecision::Improved
        } else if epoch - self.best_epoch >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }
}

/// Shuffle `0..n` into minibatches. A batch without any known value for a
/// trainable facet gets one extra exemplar, drawn with replacement from the
/// rows that have one.
pub fn plan_epoch(
    row_facets: &[Vec<usize>],
    facet_rows: &[Vec<usize>],
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> (Vec<Vec<usize>>, usize) {
    let mut order: Vec<usize> = (0..row_facets.len()).collect();
    order.shuffle(rng);
    let mut appended = 0;
    let batches = order
        .chunks(batch_size)
        .map(|chunk| {
            let mut batch = chunk.to_vec();
            let mut covered = vec![false; facet_rows.len()];
            for &r in &batch {
                for &f in &row_facets[r] {
                    covered[f] = true;
                }
            }
            for f in 0..facet_rows.len() {
                if covered[f] || facet_rows[f].is_empty() {
                    continue;
                }
                let pick = facet_rows[f][rng.gen_range(0..facet_rows[f].len())];
                for &g in &row_facets[pick] {
                    covered[g] = true;
                }
                batch.push(pick);
                appended += 1;
            }
            batch
        })
        .collect();
    (batches, appended)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_loss: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_dev_loss: f64,
    pub stopped_early: bool,
    /// Facets that never had a training value; their heads stay at initialization.
    pub untrained_facets: Vec<String>,
    /// TRAIN rows that could not be used (e.g. no entity vector).
    pub skipped_rows: usize,
    pub oversampled_rows: usize,
}

/// Summary stored alongside a trained model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub best_dev_loss: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
}

impl TrainingLog {
    pub fn summary(&self) -> TrainingSummary {
        TrainingSummary {
            best_dev_loss: self.best_dev_loss,
            best_epoch: self.best_epoch,
            epochs_run: self.epochs.len(),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct LoopOptions {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub adam: AdamConfig,
}

/// Model side of the shared minibatch loop.
pub(crate) trait Trainable: Clone {
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn zero_grads(&self) -> Vec<Vec<f64>>;

    /// Add `scale · ∂loss/∂θ` for one row into `grads` and return the row loss.
    fn accumulate(&self, row: &Exemplar, rng: &mut ChaCha8Rng, grads: &mut [Vec<f64>], scale: f64) -> Result<f64>;

    /// Mean validation loss per scored cell; `None` if nothing could be scored.
    fn dev_loss(&self, rows: &[&Exemplar]) -> Result<Option<f64>>;

    fn is_finite(&mut self) -> bool {
        self.tensors_mut().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

pub(crate) fn fit<M: Trainable>(
    mut model: M,
    train: &[&Exemplar],
    dev: &[&Exemplar],
    facet_names: &[String],
    opts: LoopOptions,
    rng: &mut ChaCha8Rng,
    mut log: TrainingLog,
) -> Result<(M, TrainingLog)> {
    if train.is_empty() {
        return Err(Error::InvalidArgument("TRAIN split has no usable rows".into()));
    }
    if dev.is_empty() {
        return Err(Error::InvalidArgument("DEV split has no usable rows".into()));
    }
    let n_facets = facet_names.len();
    let row_facets: Vec<Vec<usize>> = train
        .iter()
        .map(|r| (0..n_facets).filter(|&f| r.cells[f].is_some()).collect())
        .collect();
    let mut facet_rows: Vec<Vec<usize>> = vec![Vec::new(); n_facets];
    for (r, fs) in row_facets.iter().enumerate() {
        for &f in fs {
            facet_rows[f].push(r);
        }
    }
    for (f, rows) in facet_rows.iter().enumerate() {
        if rows.is_empty() {
            tracing::warn!(facet = %facet_names[f], "no training values; head left untrained");
            log.untrained_facets.push(facet_names[f].clone());
        }
    }

    let lens: Vec<usize> = model.tensors_mut().iter().map(|t| t.len()).collect();
    let mut adam = AdamState::new(opts.adam, &lens);
    let mut stopper = EarlyStopping::new(opts.patience);
    let mut best = model.clone();

    for epoch in 1..=opts.max_epochs {
        let (batches, appended) = plan_epoch(&row_facets, &facet_rows, opts.batch_size, rng);
        log.oversampled_rows += appended;
        let mut loss_sum = 0.0;
        let mut rows_seen = 0usize;
        for batch in batches {
            let mut grads = model.zero_grads();
            let scale = 1.0 / batch.len() as f64;
            for &r in &batch {
                loss_sum += model.accumulate(train[r], rng, &mut grads, scale)?;
            }
            rows_seen += batch.len();
            adam.step(&mut model.tensors_mut(), &grads)?;
        }
        if !model.is_finite() {
            return Err(Error::NonFinite("model parameters after update"));
        }
        let dev_loss = model
            .dev_loss(dev)?
            .ok_or_else(|| Error::InvalidArgument("DEV split has no known values to score".into()))?;
        log.epochs.push(EpochLog {
            epoch,
            train_loss: loss_sum / rows_seen.max(1) as f64,
            dev_loss,
        });
        tracing::debug!(epoch, dev_loss, "epoch finished");
        match stopper.observe(epoch, dev_loss) {
            StopDecision::Improved => best = model.clone(),
            StopDecision::Continue => {}
            StopDecision::Stop => {
                log.stopped_early = true;
                break;
            }
        }
    }
    log.best_epoch = stopper.best_epoch();
    log.best_dev_loss = stopper.best();
    if log.best_epoch == 0 {
        // every DEV loss was NaN
        return Err(Error::NonFinite("validation loss"));
    }
    Ok((best, log))
}

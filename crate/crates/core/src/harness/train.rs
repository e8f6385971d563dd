use std::collections::BTreeSet;
use std::time::Instant;

use rand::seq::SliceRandom;

use super::metrics::mean;
use crate::error::{Error, Result};
use crate::estimator::Estimator;
use crate::seed::{self, Domain};
use crate::tensor::{AdamState, Graph};
use crate::trajectory::SequenceSample;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs_max: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub dropout: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs_max: 100,
            batch_size: 64,
            learning_rate: 1e-3,
            dropout: 0.01,
            patience: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs_max == 0 || self.batch_size == 0 || self.patience == 0 {
            return Err(Error::Config("epochs_max, batch_size and patience must be positive".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {} is invalid", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} not in [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean training loss (m²) over the epoch's batches.
    pub train_loss: f64,
    /// Validation average error in meters, when a validation set is given.
    pub val_avg_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Training loss (m²) of the initial parameters, dropout off.
    pub initial_loss: f64,
    /// Training loss (m²) of the retained parameters, dropout off.
    pub final_loss: f64,
    pub history: Vec<EpochStats>,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
    pub seconds: f64,
}

/// Mean loss over `samples` in evaluation mode.
pub fn eval_loss(model: &dyn Estimator, samples: &[SequenceSample], batch_size: usize) -> Result<f64> {
    let mut total = 0.0;
    for chunk in samples.chunks(batch_size.max(1)) {
        let refs: Vec<&SequenceSample> = chunk.iter().collect();
        let g = Graph::new();
        total += model.loss(&g, &refs, None)?.value().item() * chunk.len() as f64;
    }
    Ok(total / samples.len().max(1) as f64)
}

/// Euclidean error of every prediction, in meters.
pub fn prediction_errors(model: &dyn Estimator, samples: &[SequenceSample], batch_size: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(batch_size.max(1)) {
        let refs: Vec<&SequenceSample> = chunk.iter().collect();
        for (p, s) in model.predict(&refs)?.into_iter().zip(chunk) {
            out.push(p.distance(s.target));
        }
    }
    Ok(out)
}

/// Mini-batch Adam training with early stopping on validation error.
///
/// With an empty `val` every epoch runs and the final parameters are kept.
pub fn train(
    model: &mut dyn Estimator,
    train_set: &[SequenceSample],
    val: &[SequenceSample],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Config("empty training set".into()));
    }
    let train_groups: BTreeSet<usize> = train_set.iter().map(|s| s.group_id).collect();
    if let Some(s) = val.iter().find(|s| train_groups.contains(&s.group_id)) {
        return Err(Error::Config(format!(
            "validation group {} also appears in training",
            s.group_id
        )));
    }
    let clock = Instant::now();
    let eval_batch = cfg.batch_size.max(256);
    let initial_loss = eval_loss(model, train_set, eval_batch)?;
    let mut adam = AdamState::new(model.params(), cfg.learning_rate);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::new();
    let mut best = (f64::INFINITY, 0usize, model.params().clone());
    let mut stale = 0;

    for epoch in 1..=cfg.epochs_max {
        order.shuffle(&mut seed::rng(cfg.seed, Domain::Shuffle, &[epoch as u64]));
        let mut loss_sum = 0.0;
        for (step, idx) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&SequenceSample> = idx.iter().map(|&i| &train_set[i]).collect();
            let mut drop_rng = seed::rng(cfg.seed, Domain::Dropout, &[epoch as u64, step as u64]);
            let g = Graph::new();
            let loss = model.loss(&g, &batch, Some(&mut drop_rng))?;
            let lv = loss.value().item();
            if !lv.is_finite() {
                return Err(Error::Training(format!(
                    "loss became {lv} at epoch {epoch}, step {step}"
                )));
            }
            loss_sum += lv * batch.len() as f64;
            let grads = g.backward(loss)?;
            drop(g);
            let params = model.params_mut();
            params.zero_grads();
            grads.accumulate_into(params);
            adam.step(params)
                .map_err(|e| Error::Training(format!("epoch {epoch}, step {step}: {e}")))?;
        }
        let train_loss = loss_sum / train_set.len() as f64;
        let val_avg_error = if val.is_empty() {
            None
        } else {
            Some(mean(&prediction_errors(model, val, eval_batch)?))
        };
        history.push(EpochStats {
            epoch,
            train_loss,
            val_avg_error,
        });
        match val_avg_error {
            Some(v) if v < best.0 => {
                best = (v, epoch, model.params().clone());
                stale = 0;
            }
            Some(_) => {
                stale += 1;
                if stale >= cfg.patience {
                    break;
                }
            }
            None => best.1 = epoch,
        }
    }
    if !val.is_empty() {
        model.params_mut().load_from(&best.2)?;
    }
    let final_loss = eval_loss(model, train_set, eval_batch)?;
    Ok(TrainReport {
        initial_loss,
        final_loss,
        history,
        best_epoch: best.1,
        seconds: clock.elapsed().as_secs_f64(),
    })
}

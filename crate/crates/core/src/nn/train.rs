use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, AdamState};
use super::model::{mse_loss, Gradients, Mode, Model};
use super::{mix_seed, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    /// `H × W × 2` stripe input.
    pub input: Tensor,
    /// `H × W` `±1` target.
    pub target: Tensor,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub rng_seed: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            batch_size: 32,
            max_epochs: 500,
            patience: 10,
            rng_seed: 0,
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be >= 1"));
        }
        if self.patience == 0 {
            return Err(Error::invalid("patience must be >= 1"));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(format!("learning rate {} must be >= 0", self.lr)));
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    pub stopped_early: bool,
}

/// Stops once the monitored loss has gone `patience` consecutive epochs
/// without beating its running minimum.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    wait: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            wait: 0,
        }
    }

    /// Returns `true` when training should stop after this epoch.
    pub fn observe(&mut self, loss: f64) -> bool {
        if loss < self.best {
            self.best = loss;
            self.wait = 0;
        } else {
            self.wait += 1;
        }
        self.wait >= self.patience
    }

    pub fn best(&self) -> f64 {
        self.best
    }
}

/// Mean eval-mode MSE over `set`.
pub fn evaluate(model: &Model, set: &[Example]) -> Result<f64> {
    let losses = set
        .par_iter()
        .map(|ex| mse_loss(&model.forward(&ex.input, Mode::Eval, 0)?, &ex.target))
        .collect::<Result<Vec<f64>>>()?;
    Ok(losses.iter().sum::<f64>() / set.len() as f64)
}

pub fn train(
    model: Model,
    train_set: &[Example],
    val_set: &[Example],
    cfg: &TrainConfig,
) -> Result<(Model, History)> {
    train_with_progress(model, train_set, val_set, cfg, |_| {})
}

/// Seeded mini-batch ADAM with early stopping on validation loss. The
/// returned weights are those of the last epoch run.
pub fn train_with_progress(
    mut model: Model,
    train_set: &[Example],
    val_set: &[Example],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(Model, History)> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if val_set.is_empty() {
        return Err(Error::Empty("validation set"));
    }
    let mut adam = AdamState::new(cfg.adam(), model.params().iter().map(|p| p.len()));
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut history = History::default();
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=cfg.max_epochs {
        let epoch_seed = mix_seed(cfg.rng_seed, epoch as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(epoch_seed);
        order.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let batch_seed = mix_seed(epoch_seed, b as u64);
            let model_ref = &model;
            let results = batch
                .par_iter()
                .enumerate()
                .map(|(k, &idx)| {
                    let ex = &train_set[idx];
                    model_ref.loss_and_gradients(
                        &ex.input,
                        &ex.target,
                        Mode::Train,
                        mix_seed(batch_seed, k as u64),
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            // Reduce in batch order so the sum is reproducible.
            let mut grads = Gradients::zeros_like(&model);
            for (loss, g) in &results {
                loss_sum += loss;
                grads.add_assign(g);
            }
            grads.scale(1.0 / batch.len() as f64);
            adam.step(&mut model.params_mut(), &grads.tensors)?;
        }

        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            val_loss: evaluate(&model, val_set)?,
        };
        on_epoch(&record);
        history.epochs.push(record);
        if stopper.observe(record.val_loss) {
            history.stopped_early = true;
            break;
        }
    }
    Ok((model, history))
}

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::Param;
use super::optim::AdamState;
use super::tensor::Float;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub lr: f64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.patience == 0 || self.max_epochs == 0 {
            return Err(Error::Config("batch size, patience and epoch limit must be >= 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        Ok(())
    }
}

/// A model trainable with MAE and Adam over an indexable dataset.
pub trait Trainable<T: Float> {
    type Data: ?Sized;

    fn data_len(data: &Self::Data) -> usize;

    /// Forward and backward pass over the samples `idx` in training mode;
    /// accumulates parameter gradients and returns the mean loss.
    fn loss_and_grad(&mut self, data: &Self::Data, idx: &[usize], rng: &mut ChaCha8Rng) -> Result<f64>;

    /// Mean loss over `idx` in inference mode.
    fn loss(&self, data: &Self::Data, idx: &[usize]) -> Result<f64>;

    fn params(&self) -> Vec<&Param<T>>;

    fn params_mut(&mut self) -> Vec<&mut Param<T>>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

const EVAL_CHUNK: usize = 1024;

fn mean_loss<T: Float, M: Trainable<T>>(model: &M, data: &M::Data) -> Result<f64> {
    let n = M::data_len(data);
    let idx: Vec<usize> = (0..n).collect();
    let mut total = 0.0;
    for chunk in idx.chunks(EVAL_CHUNK) {
        total += model.loss(data, chunk)? * chunk.len() as f64;
    }
    Ok(total / n as f64)
}

/// Mini-batch Adam with early stopping on the validation loss (the training
/// loss when no validation data is given). Restores the best weights.
pub fn train<T: Float, M: Trainable<T>>(
    model: &mut M,
    train_data: &M::Data,
    val_data: Option<&M::Data>,
    config: &TrainConfig,
) -> Result<TrainHistory> {
    config.validate()?;
    let n = M::data_len(train_data);
    if n == 0 {
        return Err(Error::InsufficientData("empty training set".into()));
    }
    let val_data = val_data.filter(|v| M::data_len(v) > 0);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = AdamState::<T>::new(config.lr);
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = TrainHistory {
        train_loss: Vec::new(),
        val_loss: Vec::new(),
        best_epoch: 0,
        stopped_early: false,
    };
    let mut best = f64::INFINITY;
    let mut best_params: Vec<Vec<T>> = model.params().iter().map(|p| p.value.data.clone()).collect();
    for epoch in 0..config.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut params = model.params_mut();
            params.iter_mut().for_each(|p| p.zero_grad());
            drop(params);
            let loss = model.loss_and_grad(train_data, batch, &mut rng)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("training loss became {loss} in epoch {}", epoch + 1)));
            }
            epoch_loss += loss * batch.len() as f64;
            adam.step(&mut model.params_mut())?;
        }
        history.train_loss.push(epoch_loss / n as f64);
        let monitored = match val_data {
            Some(v) => mean_loss(model, v)?,
            None => mean_loss(model, train_data)?,
        };
        history.val_loss.push(monitored);
        log::info!(
            "epoch {}: train {:.6} monitored {:.6}",
            epoch + 1,
            history.train_loss[epoch],
            monitored
        );
        if monitored < best {
            best = monitored;
            history.best_epoch = epoch + 1;
            best_params = model.params().iter().map(|p| p.value.data.clone()).collect();
        } else if epoch + 1 - history.best_epoch >= config.patience {
            history.stopped_early = true;
            break;
        }
    }
    for (p, v) in model.params_mut().into_iter().zip(best_params) {
        p.value.data = v;
    }
    Ok(history)
}

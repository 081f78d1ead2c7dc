//! Minibatch training with early stopping on the validation loss.
//!
//! Point heads minimize the Huber loss. Distributional heads minimize the
//! Gaussian negative log-likelihood, plus `kl_weight * KL` when the output
//! layer is variational.

use candle_core::Tensor;
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::Pass;
use super::model::{split_head, Model};
use super::params::{scalar_of, tensor};
use crate::bayes::{elbo_loss, gaussian_nll};
use crate::data::{Windows, WindowedSplit};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainOptions {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub huber_delta: f64,
    /// Weight of the KL term. `None` means `1 / N_train`.
    pub kl_weight: Option<f64>,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            batch_size: 32,
            learning_rate: 1e-3,
            max_epochs: 200,
            patience: 10,
            huber_delta: 1.0,
            kl_weight: None,
            seed: 0,
        }
    }
}

impl TrainOptions {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be positive"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate must be finite and nonnegative"));
        }
        if self.huber_delta.is_nan() || self.huber_delta <= 0.0 {
            return Err(Error::config("huber_delta must be positive"));
        }
        if let Some(w) = self.kl_weight {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::config("kl_weight must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept (1-based; 0 means the initial ones).
    pub best_epoch: usize,
    pub best_valid_loss: f64,
    pub stopped_early: bool,
    pub kl_weight: f64,
    /// Full-train-set loss before the first update and with the kept parameters.
    pub initial_train_loss: f64,
    pub final_train_loss: f64,
}

fn huber_tensor(pred: &Tensor, y: &Tensor, delta: f64) -> Result<Tensor> {
    let a = (pred - y)?.abs()?;
    let quad = a.minimum(delta)?;
    let lin = (&a - &quad)?;
    Ok((quad.sqr()?.affine(0.5, 0.0)? + lin.affine(delta, 0.0)?)?.mean_all()?)
}

/// Training objective on one batch.
pub fn batch_loss(model: &Model, x: &Tensor, y: &Tensor, pass: &mut Pass<'_>, huber_delta: f64, kl_weight: f64) -> Result<Tensor> {
    let out = model.forward(x, pass)?;
    let (mean, var) = split_head(&out.raw)?;
    match var {
        None => huber_tensor(&mean, y, huber_delta),
        Some(var) => {
            let nll = gaussian_nll(&mean, &var, y)?;
            match model.kl(&out)? {
                Some(kl) => elbo_loss(&nll, &kl, kl_weight),
                None => Ok(nll),
            }
        }
    }
}

fn batch_tensors(model: &Model, windows: &Windows, rows: &[usize]) -> Result<(Tensor, Tensor)> {
    let sel = windows.select(rows);
    let x = model.input(sel.inputs())?;
    let y = tensor(sel.targets().to_vec(), &[sel.len(), 1])?;
    Ok((x, y))
}

/// Mean objective over a whole set in evaluation mode, with noise from `seed`.
pub fn evaluate_loss(model: &Model, windows: &Windows, opts: &TrainOptions, kl_weight: f64, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    let n = windows.len();
    let idx: Vec<usize> = (0..n).collect();
    for chunk in idx.chunks(opts.batch_size.max(256)) {
        let (x, y) = batch_tensors(model, windows, chunk)?;
        let mut pass = Pass::eval(&mut rng);
        let loss = scalar_of(&batch_loss(model, &x, &y, &mut pass, opts.huber_delta, kl_weight)?)?;
        total += loss * chunk.len() as f64;
    }
    let mean = total / n as f64;
    if !mean.is_finite() {
        return Err(Error::numerical(format!("non-finite evaluation loss {mean}")));
    }
    Ok(mean)
}

/// Trains `model` in place and keeps the parameters with the lowest
/// validation loss.
pub fn train(model: &mut Model, split: &WindowedSplit, opts: &TrainOptions) -> Result<TrainingHistory> {
    opts.validate()?;
    if split.train.is_empty() || split.valid.is_empty() {
        return Err(Error::data("training needs nonempty train and valid sets"));
    }
    let kl_weight = opts.kl_weight.unwrap_or(1.0 / split.train.len() as f64);
    let valid_seed = opts.seed ^ 0x005e_ed0f_7a1d;
    let vars = model.store_vars();
    let mut optimizer = AdamW::new(
        vars,
        ParamsAdamW {
            lr: opts.learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-7,
            weight_decay: 0.0,
        },
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let initial_train_loss = evaluate_loss(model, &split.train, opts, kl_weight, valid_seed)?;
    let mut best_valid_loss = evaluate_loss(model, &split.valid, opts, kl_weight, valid_seed)?;
    let mut best = model.store().snapshot()?;
    let mut best_epoch = 0;
    let mut since_best = 0;
    let mut epochs = Vec::new();
    let mut stopped_early = false;
    let mut order: Vec<usize> = (0..split.train.len()).collect();

    for epoch in 1..=opts.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for rows in order.chunks(opts.batch_size) {
            let (x, y) = batch_tensors(model, &split.train, rows)?;
            let mut pass = Pass::train(&mut rng);
            let loss = batch_loss(model, &x, &y, &mut pass, opts.huber_delta, kl_weight)?;
            let value = scalar_of(&loss)?;
            if !value.is_finite() {
                return Err(Error::numerical(format!("non-finite training loss at epoch {epoch}")));
            }
            optimizer.backward_step(&loss)?;
            total += value * rows.len() as f64;
        }
        let train_loss = total / split.train.len() as f64;
        let valid_loss = evaluate_loss(model, &split.valid, opts, kl_weight, valid_seed)?;
        log::info!("epoch {epoch}: train {train_loss:.5} valid {valid_loss:.5}");
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            valid_loss,
        });
        if valid_loss < best_valid_loss {
            best_valid_loss = valid_loss;
            best = model.store().snapshot()?;
            best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= opts.patience {
                stopped_early = true;
                break;
            }
        }
    }
    model.store().restore(&best)?;
    let final_train_loss = evaluate_loss(model, &split.train, opts, kl_weight, valid_seed)?;
    Ok(TrainingHistory {
        epochs,
        best_epoch,
        best_valid_loss,
        stopped_early,
        kl_weight,
        initial_train_loss,
        final_train_loss,
    })
}

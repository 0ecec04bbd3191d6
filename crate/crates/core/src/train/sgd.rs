//! Minibatch stochastic subgradient descent with classical momentum.
//!
//! The loss is differentiable almost everywhere; at ties the lowest-index
//! active piece supplies the subgradient.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{init_params, Stopwatch, Termination, TrainReport};
use crate::error::{Error, Result};
use crate::loss::{grad_mse_into, mse_unchecked, TrainingSet};
use crate::model::{LDerParams, ModelDims};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Clamped to the training-set size at run time.
    pub batch_size: usize,
    /// In `[0, 1)`.
    pub momentum: f64,
    pub seed: u64,
    pub init_scale: f64,
    /// Divide the learning rate by `√(epoch + 1)`.
    pub decay: bool,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            learning_rate: 0.01,
            epochs: 2000,
            batch_size: 32,
            momentum: 0.9,
            seed: 0,
            init_scale: 1.0,
            decay: false,
        }
    }
}

impl SgdConfig {
    fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::domain("learning rate must be finite and nonnegative"));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::domain("epochs and batch size must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::domain("momentum must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Random visiting order for one epoch.
pub(crate) fn epoch_order(rng: &mut ChaCha8Rng, m: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..m).collect();
    idx.shuffle(rng);
    idx
}

pub fn train_sgd(t: &TrainingSet, dims: ModelDims, cfg: &SgdConfig) -> Result<(LDerParams, TrainReport)> {
    let init = init_params(dims, cfg.seed, cfg.init_scale);
    train_sgd_from(t, init, cfg)
}

/// Runs SGD starting from `init` instead of a seeded initialization.
pub fn train_sgd_from(t: &TrainingSet, init: LDerParams, cfg: &SgdConfig) -> Result<(LDerParams, TrainReport)> {
    cfg.validate()?;
    t.check_dims(init.dims())?;
    let clock = Stopwatch::start();
    let m = t.len();
    let batch = cfg.batch_size.min(m);
    let mut params = init;
    let mut velocity = vec![0.0; params.dims().flat_len()];
    let mut grad = vec![0.0; velocity.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);

    let mut report = TrainReport::new(Termination::EpochsExhausted);
    report.loss_trace.push(mse_unchecked(&params, t));

    for epoch in 0..cfg.epochs {
        let lr = if cfg.decay {
            cfg.learning_rate / libm::sqrt((epoch + 1) as f64)
        } else {
            cfg.learning_rate
        };
        let last_good = params.clone();
        for chunk in epoch_order(&mut rng, m).chunks(batch) {
            grad_mse_into(&params, t, chunk.iter().copied(), &mut grad);
            for ((a, v), g) in params.alpha_mut().iter_mut().zip(velocity.iter_mut()).zip(&grad) {
                *v = cfg.momentum * *v - lr * g;
                *a += *v;
            }
        }
        let loss = mse_unchecked(&params, t);
        report.iterations = epoch + 1;
        if !loss.is_finite() || !params.alpha().iter().all(|v| v.is_finite()) {
            report.termination = Termination::Diverged;
            params = last_good;
            break;
        }
        report.loss_trace.push(loss);
    }
    report.wall_time = clock.elapsed();
    Ok((params, report))
}

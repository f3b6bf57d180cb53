use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Mode, NetworkModel, NnError, Params};
use crate::data::RgbImage;

/// SGD-with-momentum settings for the inner training loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub weight_decay: f64,
    /// Seeds batch shuffling.
    pub rng_seed: u64,
    /// Running-statistics retention per batch: `r = m*r + (1-m)*batch`.
    pub bn_momentum: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 32,
            epochs: 10,
            weight_decay: 1e-4,
            rng_seed: 0,
            bn_momentum: 0.9,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        let bad = |m: &str| Err(NnError::BadConfig(m.to_string()));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and >= 0");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be finite and >= 0");
        }
        if !(0.0..=1.0).contains(&self.bn_momentum) {
            return bad("bn_momentum must lie in [0, 1]");
        }
        Ok(())
    }
}

/// Optimizer state carried across epochs of one training run.
pub struct Trainer {
    config: TrainConfig,
    velocity: Params,
    rng: ChaCha8Rng,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self, NnError> {
        config.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
        Ok(Self { config, velocity: Params::zeros(), rng })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// One shuffled pass over `samples` (image, class index). Returns the
    /// mean batch loss measured before each update.
    pub fn train_epoch(&mut self, model: &mut NetworkModel, samples: &[(&RgbImage, usize)]) -> Result<f64, NnError> {
        if samples.len() < 2 {
            return Err(NnError::BatchTooSmall(samples.len()));
        }
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(&mut self.rng);
        let mut batches: Vec<&[usize]> = order.chunks(self.config.batch_size).collect();
        // Batch norm cannot train on a single sample; fold it into the previous batch.
        if batches.len() > 1 && batches.last().is_some_and(|b| b.len() == 1) {
            batches.pop();
            let start = (batches.len() - 1) * self.config.batch_size;
            *batches.last_mut().expect("non-empty") = &order[start..];
        }

        let mut total = 0.0;
        let mut weight = 0usize;
        for batch in batches {
            let images: Vec<&RgbImage> = batch.iter().map(|&i| samples[i].0).collect();
            let labels: Vec<usize> = batch.iter().map(|&i| samples[i].1).collect();
            let (loss, grads, trace) = model.loss_and_grad(&images, &labels)?;
            if !loss.is_finite() {
                return Err(NnError::NonFiniteLoss(loss));
            }
            total += loss * batch.len() as f64;
            weight += batch.len();
            self.step(model, &grads);
            debug_assert_eq!(trace.mode, Mode::Train);
            let m = self.config.bn_momentum;
            for l in 0..3 {
                let rows = trace.rows(l) as f64;
                let (mean, var) = trace.batch_stats(l);
                for c in 0..mean.len() {
                    model.running_mean[l][c] = m * model.running_mean[l][c] + (1.0 - m) * mean[c];
                    let unbiased = var[c] * rows / (rows - 1.0);
                    model.running_var[l][c] = m * model.running_var[l][c] + (1.0 - m) * unbiased;
                }
            }
        }
        Ok(total / weight as f64)
    }

    fn step(&mut self, model: &mut NetworkModel, grads: &Params) {
        let TrainConfig { learning_rate: lr, momentum: mu, weight_decay: wd, .. } = self.config;
        let grad_groups = grads.groups();
        for (g, ((p, v), grad)) in
            model.params.groups_mut().into_iter().zip(self.velocity.groups_mut()).zip(grad_groups).enumerate()
        {
            let decay = if Params::is_weight_group(g) { wd } else { 0.0 };
            for ((pi, vi), &gi) in p.iter_mut().zip(v.iter_mut()).zip(grad) {
                *vi = mu * *vi - lr * (gi + decay * *pi);
                *pi += *vi;
            }
        }
    }
}

/// Trains for `config.epochs` epochs with a fresh optimizer; returns the
/// per-epoch losses.
pub fn train(
    model: &mut NetworkModel,
    samples: &[(&RgbImage, usize)],
    config: &TrainConfig,
) -> Result<Vec<f64>, NnError> {
    let mut trainer = Trainer::new(config.clone())?;
    (0..config.epochs).map(|_| trainer.train_epoch(model, samples)).collect()
}

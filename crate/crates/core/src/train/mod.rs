//! Optimization loop: AdamW, warmup + cosine schedule, mixup/cutmix, top-1 evaluation.

pub mod augment;
pub mod optim;
pub mod schedule;

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use augment::{augment, cutmix, mixup, Batch, Mix};
pub use optim::{adamw_update, AdamWHyper, AdamWState, BiasCorrection};
pub use schedule::lr_at;

use crate::autograd::Tape;
use crate::data::Dataset;
use crate::element::Element;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub warmup_epochs: usize,
    pub base_lr: f64,
    /// Floor of the cosine decay, reached on the last step.
    pub min_lr: f64,
    pub weight_decay: f64,
    /// Beta(α, α) parameter for mixup; 0 disables it.
    pub mixup_alpha: f64,
    /// Beta(α, α) parameter for cutmix; 0 disables it.
    pub cutmix_alpha: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 300,
            warmup_epochs: 3,
            base_lr: 0.01,
            min_lr: 0.01 * 1e-2,
            weight_decay: 1e-5,
            mixup_alpha: 0.2,
            cutmix_alpha: 0.4,
            batch_size: 128,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::validation(msg));
        if self.epochs <= self.warmup_epochs {
            return fail(format!(
                "epochs ({}) must exceed warmup_epochs ({})",
                self.epochs, self.warmup_epochs
            ));
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1".into());
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return fail(format!("base_lr must be positive, got {}", self.base_lr));
        }
        for (name, v) in [
            ("min_lr", self.min_lr),
            ("weight_decay", self.weight_decay),
            ("mixup_alpha", self.mixup_alpha),
            ("cutmix_alpha", self.cutmix_alpha),
            ("eps", self.eps),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return fail(format!("{name} must be a finite value >= 0, got {v}"));
            }
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return fail(format!("{name} must lie in [0, 1), got {v}"));
            }
        }
        Ok(())
    }

    pub fn hyper(&self) -> AdamWHyper {
        AdamWHyper {
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay: self.weight_decay,
        }
    }

    pub fn steps_per_epoch(&self, samples: usize) -> u64 {
        samples.div_ceil(self.batch_size.max(1)) as u64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Sample-weighted mean training loss.
    pub mean_loss: f64,
    pub batch_losses: Vec<f64>,
    /// Learning rate used by the last step of the epoch.
    pub lr: f64,
    pub samples_per_sec: f64,
    pub seconds: f64,
}

/// Sample order for one epoch, a pure function of `(seed, epoch)`.
pub fn epoch_order(len: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = epoch_rng(seed, epoch);
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut rng);
    order
}

fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    rng
}

/// Loss and parameter gradients for one batch. Gradients are accumulated
/// into the model's `grad` buffers, which the caller is expected to have zeroed.
pub fn batch_loss_and_grad<T: Element>(model: &mut Model<T>, batch: &Batch<T>) -> Result<f64> {
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape, true);
    let images = Tensor::new(
        &[batch.size, batch.channels, batch.height, batch.width],
        batch.images.clone(),
    )?;
    let target = Tensor::new(&[batch.size, batch.classes], batch.labels.clone())?;
    let x = tape.constant(images);
    let logits = model.forward(&mut tape, &bound, x)?;
    let loss = tape.softmax_cross_entropy(logits, &target)?;
    let value = tape.value(loss).item().to_f64();
    tape.backward(loss)?;
    model.accumulate_grads(&tape, &bound);
    Ok(value)
}

/// One pass over `dataset` in seeded shuffled order. `epoch` is 0-based; the
/// global step (for the schedule) is taken from the optimizer's step counter.
pub fn train_epoch<T: Element>(
    model: &mut Model<T>,
    dataset: &Dataset,
    state: &mut AdamWState<T>,
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<EpochMetrics> {
    if dataset.is_empty() {
        return Err(Error::validation("cannot train on an empty dataset"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::validation("batch_size must be at least 1"));
    }
    let start = Instant::now();
    let hyper = cfg.hyper();
    let steps_per_epoch = cfg.steps_per_epoch(dataset.len());
    let order = epoch_order(dataset.len(), cfg.seed, epoch);
    let mut rng = epoch_rng(cfg.seed ^ 0x6d69_7869_6e67, epoch);
    let mut batch_losses = Vec::with_capacity(steps_per_epoch as usize);
    let mut weighted = 0.0;
    let mut lr = 0.0;
    for (index, chunk) in order.chunks(cfg.batch_size).enumerate() {
        let tag = |e: Error| match e {
            Error::NonFinite(msg) => {
                Error::NonFinite(format!("epoch {epoch}, batch {index}: {msg}"))
            }
            other => other,
        };
        let mut batch = dataset.batch::<T>(chunk);
        augment(&mut batch, cfg.mixup_alpha, cfg.cutmix_alpha, &mut rng)?;
        model.zero_grad();
        let loss = batch_loss_and_grad(model, &batch).map_err(tag)?;
        if !loss.is_finite() {
            return Err(tag(Error::NonFinite(format!("loss is {loss}"))));
        }
        lr = lr_at(state.t, steps_per_epoch, cfg);
        state.step(model, lr, &hyper).map_err(tag)?;
        weighted += loss * chunk.len() as f64;
        batch_losses.push(loss);
    }
    let seconds = start.elapsed().as_secs_f64();
    Ok(EpochMetrics {
        epoch,
        mean_loss: weighted / dataset.len() as f64,
        batch_losses,
        lr,
        samples_per_sec: dataset.len() as f64 / seconds.max(1e-12),
        seconds,
    })
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax<T: Element>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Fraction of rows of `[B, K]` logits whose argmax equals the label.
pub fn top1_from_logits<T: Element>(logits: &[T], classes: usize, labels: &[usize]) -> f64 {
    assert_eq!(
        logits.len(),
        classes * labels.len(),
        "logits/labels mismatch"
    );
    if labels.is_empty() {
        return 0.0;
    }
    let correct = logits
        .chunks_exact(classes)
        .zip(labels)
        .filter(|(row, &l)| argmax(row) == l)
        .count();
    correct as f64 / labels.len() as f64
}

/// Top-1 accuracy of `model` over `dataset`, without augmentation.
pub fn evaluate_top1<T: Element>(
    model: &Model<T>,
    dataset: &Dataset,
    batch_size: usize,
) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::validation("cannot evaluate on an empty dataset"));
    }
    let indices: Vec<usize> = (0..dataset.len()).collect();
    let mut correct = 0.0;
    for chunk in indices.chunks(batch_size.max(1)) {
        let images = dataset.images_tensor::<T>(chunk);
        let logits = model.logits(&images)?;
        let labels: Vec<usize> = chunk.iter().map(|&i| dataset.labels()[i]).collect();
        correct += top1_from_logits(logits.data(), model.config().num_classes, &labels)
            * chunk.len() as f64;
    }
    Ok(correct / dataset.len() as f64)
}

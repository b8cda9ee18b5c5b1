//! Linear warmup followed by cosine decay.

use super::TrainConfig;

/// Learning rate for optimizer step `step` (0-based).
///
/// Ramps linearly from 0 to `base_lr` over `warmup_epochs · steps_per_epoch`
/// steps, then follows `min_lr + (base_lr - min_lr)(1 + cos(π·p))/2`, where `p`
/// runs from 0 at the end of warmup to 1 at the last step of training.
pub fn lr_at(step: u64, steps_per_epoch: u64, cfg: &TrainConfig) -> f64 {
    let warmup = cfg.warmup_epochs as u64 * steps_per_epoch;
    let total = cfg.epochs as u64 * steps_per_epoch;
    if step < warmup {
        return cfg.base_lr * step as f64 / warmup as f64;
    }
    let span = total.saturating_sub(1).saturating_sub(warmup);
    let progress = if span == 0 {
        1.0
    } else {
        ((step - warmup) as f64 / span as f64).min(1.0)
    };
    cfg.min_lr + (cfg.base_lr - cfg.min_lr) * (1.0 + (std::f64::consts::PI * progress).cos()) / 2.0
}

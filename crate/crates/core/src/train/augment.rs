//! Label-mixing augmentations: mixup and cutmix.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Beta, Distribution};

use crate::element::Element;
use crate::error::{Error, Result};

/// A training batch: `[B, C, H, W]` images with `[B, K]` soft labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch<T: Element> {
    pub images: Vec<T>,
    pub labels: Vec<T>,
    pub size: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub classes: usize,
}

impl<T: Element> Batch<T> {
    /// Batch with one-hot labels.
    pub fn one_hot(
        images: Vec<T>,
        targets: &[usize],
        [channels, height, width]: [usize; 3],
        classes: usize,
    ) -> Result<Self> {
        let size = targets.len();
        if images.len() != size * channels * height * width {
            return Err(Error::shape(format!(
                "{} pixel values do not form {size} images of {channels}x{height}x{width}",
                images.len()
            )));
        }
        let mut labels = vec![T::ZERO; size * classes];
        for (i, &t) in targets.iter().enumerate() {
            if t >= classes {
                return Err(Error::validation(format!(
                    "label {t} out of range for {classes} classes"
                )));
            }
            labels[i * classes + t] = T::ONE;
        }
        Ok(Batch {
            images,
            labels,
            size,
            channels,
            height,
            width,
            classes,
        })
    }

    fn image_len(&self) -> usize {
        self.channels * self.height * self.width
    }
}

/// Which augmentation a batch received.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Mix {
    None,
    Mixup { lambda: f64 },
    Cutmix { area: f64 },
}

fn random_partner<R: Rng + ?Sized>(size: usize, rng: &mut R) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..size).collect();
    perm.shuffle(rng);
    perm
}

fn sample_lambda<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> Result<f64> {
    let beta = Beta::new(alpha, alpha)
        .map_err(|e| Error::validation(format!("invalid mixing alpha {alpha}: {e}")))?;
    Ok(beta.sample(rng))
}

/// `x ← λx + (1−λ)x[perm]`, `y ← λy + (1−λ)y[perm]`.
pub fn mixup_with<T: Element>(batch: &mut Batch<T>, lambda: f64, perm: &[usize]) {
    assert_eq!(perm.len(), batch.size);
    let lam = T::from_f64(lambda);
    let rest = T::from_f64(1.0 - lambda);
    let (images, labels) = (batch.images.clone(), batch.labels.clone());
    let mix = |dst: &mut [T], src: &[T], width: usize| {
        for (i, row) in dst.chunks_exact_mut(width).enumerate() {
            let partner = &src[perm[i] * width..(perm[i] + 1) * width];
            for (d, &p) in row.iter_mut().zip(partner) {
                *d = lam * *d + rest * p;
            }
        }
    };
    let il = batch.image_len();
    mix(&mut batch.images, &images, il);
    mix(&mut batch.labels, &labels, batch.classes);
}

/// Mixup with `λ ~ Beta(alpha, alpha)` and a random partner permutation. Returns λ.
pub fn mixup<T: Element, R: Rng + ?Sized>(
    batch: &mut Batch<T>,
    alpha: f64,
    rng: &mut R,
) -> Result<f64> {
    let lambda = sample_lambda(alpha, rng)?;
    let perm = random_partner(batch.size, rng);
    mixup_with(batch, lambda, &perm);
    Ok(lambda)
}

/// Clipped paste box `[y0, y1) × [x0, x1)` for a cut of area ratio `1 − λ` centred at `center`.
pub fn cutmix_box(
    lambda: f64,
    (height, width): (usize, usize),
    (cy, cx): (usize, usize),
) -> (usize, usize, usize, usize) {
    let ratio = (1.0 - lambda).max(0.0).sqrt();
    let cut_h = (height as f64 * ratio) as usize;
    let cut_w = (width as f64 * ratio) as usize;
    let y0 = cy.saturating_sub(cut_h / 2);
    let y1 = (cy + cut_h / 2).min(height);
    let x0 = cx.saturating_sub(cut_w / 2);
    let x1 = (cx + cut_w / 2).min(width);
    (y0, y1.max(y0), x0, x1.max(x0))
}

/// Pastes the box from each partner image and mixes labels by the pasted area
/// fraction. Returns that fraction.
pub fn cutmix_with<T: Element>(
    batch: &mut Batch<T>,
    lambda: f64,
    perm: &[usize],
    center: (usize, usize),
) -> f64 {
    assert_eq!(perm.len(), batch.size);
    let (h, w) = (batch.height, batch.width);
    let (y0, y1, x0, x1) = cutmix_box(lambda, (h, w), center);
    let area = ((y1 - y0) * (x1 - x0)) as f64 / (h * w) as f64;
    let il = batch.image_len();
    let source = batch.images.clone();
    for (i, img) in batch.images.chunks_exact_mut(il).enumerate() {
        let partner = &source[perm[i] * il..(perm[i] + 1) * il];
        for ch in 0..batch.channels {
            for y in y0..y1 {
                let row = ch * h * w + y * w;
                img[row + x0..row + x1].copy_from_slice(&partner[row + x0..row + x1]);
            }
        }
    }
    let labels = batch.labels.clone();
    let keep = T::from_f64(1.0 - area);
    let take = T::from_f64(area);
    let k = batch.classes;
    for (i, row) in batch.labels.chunks_exact_mut(k).enumerate() {
        let partner = &labels[perm[i] * k..(perm[i] + 1) * k];
        for (d, &p) in row.iter_mut().zip(partner) {
            *d = keep * *d + take * p;
        }
    }
    area
}

/// Cutmix with `λ ~ Beta(alpha, alpha)`, a uniform box centre and a random
/// partner permutation. Returns the pasted area fraction.
pub fn cutmix<T: Element, R: Rng + ?Sized>(
    batch: &mut Batch<T>,
    alpha: f64,
    rng: &mut R,
) -> Result<f64> {
    let lambda = sample_lambda(alpha, rng)?;
    let center = (
        rng.random_range(0..batch.height),
        rng.random_range(0..batch.width),
    );
    let perm = random_partner(batch.size, rng);
    Ok(cutmix_with(batch, lambda, &perm, center))
}

/// Applies mixup or cutmix (coin flip when both alphas are positive, the
/// enabled one otherwise). Batches of one sample are left alone.
pub fn augment<T: Element, R: Rng + ?Sized>(
    batch: &mut Batch<T>,
    mixup_alpha: f64,
    cutmix_alpha: f64,
    rng: &mut R,
) -> Result<Mix> {
    if batch.size < 2 {
        return Ok(Mix::None);
    }
    let use_mixup = match (mixup_alpha > 0.0, cutmix_alpha > 0.0) {
        (false, false) => return Ok(Mix::None),
        (true, false) => true,
        (false, true) => false,
        (true, true) => rng.random_bool(0.5),
    };
    if use_mixup {
        Ok(Mix::Mixup {
            lambda: mixup(batch, mixup_alpha, rng)?,
        })
    } else {
        Ok(Mix::Cutmix {
            area: cutmix(batch, cutmix_alpha, rng)?,
        })
    }
}

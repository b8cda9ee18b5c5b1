//! CIFAR-100 binary ingestion.
//!
//! Each record is 3074 bytes: coarse label, fine label, then 3072 pixel bytes
//! as three 32×32 row-major planes (R, G, B). Files are `train.bin` (50 000
//! records) and `test.bin` (10 000 records).

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::element::Element;
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::train::augment::Batch;

pub const SIDE: usize = 32;
pub const CHANNELS: usize = 3;
pub const PIXELS: usize = CHANNELS * SIDE * SIDE;
pub const RECORD_BYTES: usize = PIXELS + 2;
pub const COARSE_CLASSES: u8 = 20;
pub const FINE_CLASSES: usize = 100;

#[derive(Clone, PartialEq, Eq)]
pub struct Cifar100Record {
    pub coarse_label: u8,
    pub fine_label: u8,
    pub pixels: Box<[u8; PIXELS]>,
}

impl std::fmt::Debug for Cifar100Record {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Cifar100Record")
            .field("coarse_label", &self.coarse_label)
            .field("fine_label", &self.fine_label)
            .finish_non_exhaustive()
    }
}

impl Cifar100Record {
    pub fn to_bytes(&self) -> [u8; RECORD_BYTES] {
        let mut out = [0u8; RECORD_BYTES];
        out[0] = self.coarse_label;
        out[1] = self.fine_label;
        out[2..].copy_from_slice(&self.pixels[..]);
        out
    }
}

/// Parses a whole CIFAR-100 binary file image.
pub fn parse_cifar100(bytes: &[u8]) -> Result<Vec<Cifar100Record>> {
    if !bytes.len().is_multiple_of(RECORD_BYTES) {
        return Err(Error::format(format!(
            "CIFAR-100 file length {} is not a multiple of {RECORD_BYTES}: expected {} or {} bytes",
            bytes.len(),
            bytes.len() / RECORD_BYTES * RECORD_BYTES,
            (bytes.len() / RECORD_BYTES + 1) * RECORD_BYTES
        )));
    }
    bytes
        .chunks_exact(RECORD_BYTES)
        .enumerate()
        .map(|(i, rec)| {
            let (coarse, fine) = (rec[0], rec[1]);
            if coarse >= COARSE_CLASSES || fine as usize >= FINE_CLASSES {
                return Err(Error::format(format!(
                    "record {i}: labels (coarse {coarse}, fine {fine}) out of range"
                )));
            }
            let mut pixels = Box::new([0u8; PIXELS]);
            pixels.copy_from_slice(&rec[2..]);
            Ok(Cifar100Record {
                coarse_label: coarse,
                fine_label: fine,
                pixels,
            })
        })
        .collect()
}

pub fn load_cifar100(path: impl AsRef<Path>) -> Result<Vec<Cifar100Record>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })?;
    parse_cifar100(&bytes).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn write_cifar100(records: &[Cifar100Record], path: impl AsRef<Path>) -> Result<()> {
    let mut bytes = Vec::with_capacity(records.len() * RECORD_BYTES);
    for r in records {
        bytes.extend_from_slice(&r.to_bytes());
    }
    fs::write(path, bytes)?;
    Ok(())
}

/// Locations of the train/test files under a data directory. Accepts either the
/// directory holding `train.bin` or its parent containing `cifar-100-binary/`.
#[derive(Clone, Debug)]
pub struct CifarFiles {
    pub train: PathBuf,
    pub test: PathBuf,
}

impl CifarFiles {
    pub fn locate(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        for base in [dir.to_path_buf(), dir.join("cifar-100-binary")] {
            let train = base.join("train.bin");
            let test = base.join("test.bin");
            if train.is_file() && test.is_file() {
                return Ok(CifarFiles { train, test });
            }
        }
        Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!(
                "no CIFAR-100 train.bin/test.bin under {} (or its cifar-100-binary/ subdirectory)",
                dir.display()
            ),
        )))
    }
}

/// Per-channel mean and standard deviation of pixel intensities scaled to [0, 1].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: [f64; CHANNELS],
    pub std: [f64; CHANNELS],
}

impl ChannelStats {
    pub fn from_records(records: &[Cifar100Record]) -> Self {
        let plane = SIDE * SIDE;
        let mut sum = [0.0f64; CHANNELS];
        let mut sq = [0.0f64; CHANNELS];
        for r in records {
            for ch in 0..CHANNELS {
                for &p in &r.pixels[ch * plane..(ch + 1) * plane] {
                    let v = p as f64 / 255.0;
                    sum[ch] += v;
                    sq[ch] += v * v;
                }
            }
        }
        let n = (records.len() * plane).max(1) as f64;
        let mean = sum.map(|s| s / n);
        let mut std = [0.0; CHANNELS];
        for ch in 0..CHANNELS {
            let var = (sq[ch] / n - mean[ch] * mean[ch]).max(0.0);
            std[ch] = if var > 0.0 { var.sqrt() } else { 1.0 };
        }
        ChannelStats { mean, std }
    }

    pub fn identity() -> Self {
        ChannelStats {
            mean: [0.0; CHANNELS],
            std: [1.0; CHANNELS],
        }
    }
}

/// Normalised images with fine labels, ready for batching. Immutable after construction.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    images: Vec<f32>,
    labels: Vec<usize>,
    side: usize,
    num_classes: usize,
}

impl Dataset {
    /// Scales pixels to [0, 1] and normalises each channel with `stats`.
    pub fn from_records(records: &[Cifar100Record], stats: &ChannelStats) -> Self {
        let plane = SIDE * SIDE;
        let mut images = Vec::with_capacity(records.len() * PIXELS);
        for r in records {
            for ch in 0..CHANNELS {
                let (m, s) = (stats.mean[ch], stats.std[ch]);
                images.extend(
                    r.pixels[ch * plane..(ch + 1) * plane]
                        .iter()
                        .map(|&p| ((p as f64 / 255.0 - m) / s) as f32),
                );
            }
        }
        Dataset {
            images,
            labels: records.iter().map(|r| r.fine_label as usize).collect(),
            side: SIDE,
            num_classes: FINE_CLASSES,
        }
    }

    /// Builds a dataset from already-normalised `[n, 3, side, side]` pixels.
    pub fn from_parts(
        images: Vec<f32>,
        labels: Vec<usize>,
        side: usize,
        num_classes: usize,
    ) -> Result<Self> {
        if images.len() != labels.len() * CHANNELS * side * side {
            return Err(Error::shape(format!(
                "{} values do not form {} images of 3x{side}x{side}",
                images.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::validation(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        Ok(Dataset {
            images,
            labels,
            side,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    fn image_len(&self) -> usize {
        CHANNELS * self.side * self.side
    }

    pub fn image(&self, i: usize) -> &[f32] {
        let n = self.image_len();
        &self.images[i * n..(i + 1) * n]
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut images = Vec::with_capacity(indices.len() * self.image_len());
        for &i in indices {
            images.extend_from_slice(self.image(i));
        }
        Dataset {
            images,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            side: self.side,
            num_classes: self.num_classes,
        }
    }

    /// Nearest-neighbour upscale to `side × side` pixels.
    pub fn resize_nearest(&self, side: usize) -> Dataset {
        if side == self.side {
            return self.clone();
        }
        let src = self.side;
        let mut images = Vec::with_capacity(self.len() * CHANNELS * side * side);
        for i in 0..self.len() {
            let img = self.image(i);
            for ch in 0..CHANNELS {
                for y in 0..side {
                    let sy = y * src / side;
                    for x in 0..side {
                        images.push(img[ch * src * src + sy * src + x * src / side]);
                    }
                }
            }
        }
        Dataset {
            images,
            labels: self.labels.clone(),
            side,
            num_classes: self.num_classes,
        }
    }

    /// Images `[B, 3, side, side]` in element type `T`, without labels.
    pub fn images_tensor<T: Element>(&self, indices: &[usize]) -> Tensor<T> {
        let mut data = Vec::with_capacity(indices.len() * self.image_len());
        for &i in indices {
            data.extend(self.image(i).iter().map(|&v| T::from_f64(v as f64)));
        }
        Tensor::new(&[indices.len(), CHANNELS, self.side, self.side], data)
            .expect("non-empty index list")
    }

    /// One-hot labelled batch of the given samples.
    pub fn batch<T: Element>(&self, indices: &[usize]) -> Batch<T> {
        let images = self.images_tensor::<T>(indices).into_data();
        let targets: Vec<usize> = indices.iter().map(|&i| self.labels[i]).collect();
        Batch::one_hot(
            images,
            &targets,
            [CHANNELS, self.side, self.side],
            self.num_classes,
        )
        .expect("dataset invariants guarantee a consistent batch")
    }
}

/// Seed-deterministic choice of `k` sample indices (ascending). When
/// `k >= num_classes` every class contributes `⌊k/num_classes⌋` or one more
/// sample, as far as the class has members.
pub fn stratified_subset(labels: &[usize], num_classes: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = k.min(labels.len());
    if k < num_classes {
        let mut all: Vec<usize> = (0..labels.len()).collect();
        all.shuffle(&mut rng);
        let mut out = all[..k].to_vec();
        out.sort_unstable();
        return out;
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    for members in &mut by_class {
        members.shuffle(&mut rng);
    }
    let mut class_order: Vec<usize> = (0..num_classes).collect();
    class_order.shuffle(&mut rng);
    let base = k / num_classes;
    let extra = k % num_classes;
    let mut chosen = Vec::with_capacity(k);
    let mut leftovers = Vec::new();
    for (rank, &class) in class_order.iter().enumerate() {
        let want = base + usize::from(rank < extra);
        let members = &by_class[class];
        let take = want.min(members.len());
        chosen.extend_from_slice(&members[..take]);
        leftovers.extend_from_slice(&members[take..]);
    }
    if chosen.len() < k {
        leftovers.shuffle(&mut rng);
        let short = k - chosen.len();
        chosen.extend_from_slice(&leftovers[..short]);
    }
    chosen.sort_unstable();
    chosen
}

/// Class-structured stand-in records for smoke tests when the real files are
/// absent. Each fine class owns a random 4×4 grid of block colours; samples
/// add uniform pixel noise of ±`noise` to their class pattern. Labels cycle
/// through the classes, so any prefix is near-balanced.
pub fn synthetic_records(count: usize, noise: u8, seed: u64) -> Vec<Cifar100Record> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    const GRID: usize = 4;
    let cell = SIDE / GRID;
    let prototypes: Vec<Vec<u8>> = (0..FINE_CLASSES)
        .map(|_| {
            (0..CHANNELS * GRID * GRID)
                .map(|_| rng.random_range(32..=223))
                .collect()
        })
        .collect();
    (0..count)
        .map(|i| {
            let fine = i % FINE_CLASSES;
            let proto = &prototypes[fine];
            let mut pixels = Box::new([0u8; PIXELS]);
            for ch in 0..CHANNELS {
                for y in 0..SIDE {
                    for x in 0..SIDE {
                        let base = proto[ch * GRID * GRID + (y / cell) * GRID + x / cell] as i32;
                        let jitter = rng.random_range(-(noise as i32)..=noise as i32);
                        pixels[ch * SIDE * SIDE + y * SIDE + x] =
                            (base + jitter).clamp(0, 255) as u8;
                    }
                }
            }
            Cifar100Record {
                coarse_label: (fine % COARSE_CLASSES as usize) as u8,
                fine_label: fine as u8,
                pixels,
            }
        })
        .collect()
}

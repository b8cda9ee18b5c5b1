//! Shared inputs for the criterion benches.

use mcmlp_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Uniform(-1, 1) signal, fixed by `seed`.
pub fn signal(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn slab(shape: &[usize], seed: u64) -> Tensor<f32> {
    let n = shape.iter().product();
    let data = signal(n, seed).into_iter().map(|v| v as f32).collect();
    Tensor::new(shape, data).expect("non-empty shape")
}

//! Seeded inputs shared by the benchmarks in `benches/`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vitforge::{Real, Tensor};

/// Uniform values in `[-1, 1)` from a fixed seed.
pub fn random_tensor<T: Real>(shape: &[usize], seed: u64) -> Tensor<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| T::of(rng.random_range(-1.0..1.0)))
}

/// Images with values in `[0, 1)`.
pub fn random_images(batch: usize, side: usize, seed: u64) -> Tensor<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn([batch, 3, side, side], |_| rng.random_range(0.0..1.0))
}

/// `n` scores with coarse ties and alternating labels.
pub fn auc_inputs(n: usize, seed: u64) -> (Vec<f64>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scores = (0..n).map(|_| f64::from(rng.random_range(0..1000u32)) / 1000.0).collect();
    let labels = (0..n).map(|i| i % 3 == 0).collect();
    (scores, labels)
}

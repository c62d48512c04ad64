#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vitforge::{Tensor, ViTConfig, ViTParams};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng, scale: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-scale..scale))
}

/// Default-initialized parameters with every tensor pushed away from its
/// initial value, so gammas are not 1 and biases are not 0.
pub fn perturbed_params(cfg: &ViTConfig, seed: u64) -> ViTParams<f64> {
    let mut params = ViTParams::<f64>::init(cfg, seed).unwrap();
    let mut r = rng(seed ^ 0x5eed);
    for t in params.iter_mut() {
        for v in t.data_mut() {
            *v += r.random_range(-0.3..0.3);
        }
    }
    params
}

/// Passes when the absolute error is within `1e-8` or the relative error is below `1e-4`.
pub fn close(analytic: f64, numeric: f64) -> bool {
    let diff = (analytic - numeric).abs();
    diff <= 1e-8 || diff / analytic.abs().max(numeric.abs()) < 1e-4
}

/// Central difference of `f` along component `i` of `x`, step `h`.
pub fn central_difference(x: &mut Tensor<f64>, i: usize, h: f64, mut f: impl FnMut(&Tensor<f64>) -> f64) -> f64 {
    let orig = x.data()[i];
    x.data_mut()[i] = orig + h;
    let plus = f(x);
    x.data_mut()[i] = orig - h;
    let minus = f(x);
    x.data_mut()[i] = orig;
    (plus - minus) / (2.0 * h)
}

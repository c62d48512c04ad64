use rayon::prelude::*;

use super::TrainConfig;
use crate::error::{Error, Result};
use crate::model::ParamSet;
use crate::tensor::{Real, Tensor};

/// First and second moments per parameter plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T: Real> {
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub t: u64,
}

impl<T: Real> AdamState<T> {
    /// Zero moments shaped like `params`.
    pub fn new<'p>(params: impl IntoIterator<Item = &'p Tensor<T>>) -> Self {
        let m: Vec<Tensor<T>> = params.into_iter().map(|p| Tensor::zeros(p.shape())).collect();
        Self {
            v: m.clone(),
            m,
            t: 0,
        }
    }

    pub fn for_params(params: &ParamSet<Tensor<T>>) -> Self {
        Self::new(params.iter())
    }
}

/// One bias-corrected Adam update of every parameter in place.
pub fn adam_step<T: Real>(
    params: &mut [&mut Tensor<T>],
    grads: &[&Tensor<T>],
    state: &mut AdamState<T>,
    cfg: &TrainConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::dim(format!(
            "adam_step got {} parameters, {} gradients and {} moment slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || p.shape() != state.m[i].shape() {
            return Err(Error::dim(format!(
                "parameter {i} has shape {:?} but gradient {:?}",
                p.shape(),
                g.shape()
            )));
        }
    }

    state.t += 1;
    let t = state.t as i32;
    let b1 = T::of(cfg.adam_beta1);
    let b2 = T::of(cfg.adam_beta2);
    let one = T::one();
    let c1 = T::of(1.0 - cfg.adam_beta1.powi(t));
    let c2 = T::of(1.0 - cfg.adam_beta2.powi(t));
    let lr = T::of(cfg.learning_rate);
    let eps = T::of(cfg.adam_eps);

    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        p.data_mut()
            .par_iter_mut()
            .zip(g.data().par_iter())
            .zip(m.data_mut().par_iter_mut().zip(v.data_mut().par_iter_mut()))
            .for_each(|((theta, &g), (m, v))| {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *theta -= lr * m_hat / (v_hat.sqrt() + eps);
            });
    }
    Ok(())
}

/// [`adam_step`] over a whole parameter set.
pub fn adam_step_params<T: Real>(
    params: &mut ParamSet<Tensor<T>>,
    grads: &ParamSet<Tensor<T>>,
    state: &mut AdamState<T>,
    cfg: &TrainConfig,
) -> Result<()> {
    let mut p = params.iter_mut();
    adam_step(&mut p, &grads.iter(), state, cfg)
}

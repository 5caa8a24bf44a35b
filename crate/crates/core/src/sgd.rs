//! Momentum SGD with L2 weight decay and a step learning-rate policy.
//!
//! Per element: `g' = g + decay·w`, `v ← μ·v − lr·g'`, `w ← w + v`, with
//! `lr = base_lr · γ^⌊iteration / stepsize⌋`.

use crate::error::{Error, Result};
use crate::network::NetworkParams;
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SgdConfig {
    pub base_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub gamma: f64,
    pub stepsize: u64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            base_lr: 0.01,
            momentum: 0.9,
            weight_decay: 0.0005,
            gamma: 0.1,
            stepsize: 10_000,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.base_lr > 0.0
            && (0.0..1.0).contains(&self.momentum)
            && self.weight_decay >= 0.0
            && self.gamma > 0.0
            && self.gamma <= 1.0
            && self.stepsize >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid SGD settings {self:?}")))
        }
    }

    /// Step policy. The power is applied by repeated multiplication so each
    /// plateau equals `base_lr · γ · … · γ` exactly (0.01, 0.001, 0.0001 for
    /// the defaults).
    pub fn lr_at(&self, iteration: u64) -> f64 {
        let drops = iteration / self.stepsize.max(1);
        let mut lr = self.base_lr;
        for _ in 0..drops {
            lr *= self.gamma;
            if lr == 0.0 {
                break;
            }
        }
        lr
    }
}

/// Free-function form of [`SgdConfig::lr_at`].
pub fn lr_at(iteration: u64, config: &SgdConfig) -> f64 {
    config.lr_at(iteration)
}

/// One update over flat slices.
pub fn sgd_update<T: Scalar>(
    params: &mut [T],
    grads: &[T],
    velocity: &mut [T],
    lr: f64,
    config: &SgdConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != velocity.len() {
        return Err(Error::dim(format!(
            "sgd: {} params, {} grads, {} velocity entries",
            params.len(),
            grads.len(),
            velocity.len()
        )));
    }
    let lr = T::from_f64(lr);
    let mu = T::from_f64(config.momentum);
    let decay = T::from_f64(config.weight_decay);
    for ((w, &g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        let g = g + decay * *w;
        *v = mu * *v - lr * g;
        *w = *w + *v;
    }
    Ok(())
}

/// Momentum buffers mirroring a parameter set.
#[derive(Clone, Debug, PartialEq)]
pub struct Velocity<T = f32> {
    buffers: Vec<Tensor<T>>,
}

impl<T: Scalar> Velocity<T> {
    pub fn zeros_like(params: &NetworkParams<T>) -> Self {
        Self {
            buffers: params.tensors().map(|t| Tensor::zeros(t.shape())).collect(),
        }
    }

    pub fn buffers(&self) -> &[Tensor<T>] {
        &self.buffers
    }
}

/// Applies one step to every tensor, using `lr_at(iteration)`.
pub fn sgd_step<T: Scalar>(
    params: &mut NetworkParams<T>,
    grads: &NetworkParams<T>,
    velocity: &mut Velocity<T>,
    config: &SgdConfig,
    iteration: u64,
) -> Result<()> {
    let n = params.tensors().count();
    if grads.tensors().count() != n || velocity.buffers.len() != n {
        return Err(Error::dim("sgd: parameter, gradient and velocity sets differ"));
    }
    for ((p, g), v) in params.tensors().zip(grads.tensors()).zip(&velocity.buffers) {
        if p.shape() != g.shape() || p.shape() != v.shape() {
            return Err(Error::dim(format!(
                "sgd: shapes {:?} / {:?} / {:?}",
                p.shape(),
                g.shape(),
                v.shape()
            )));
        }
    }
    let lr = config.lr_at(iteration);
    for ((p, g), v) in params
        .tensors_mut()
        .zip(grads.tensors())
        .zip(velocity.buffers.iter_mut())
    {
        sgd_update(p.data_mut(), g.data(), v.data_mut(), lr, config)?;
    }
    Ok(())
}

//! Mean squared error, the round-equal accuracy metric, gradient clipping
//! and RMSprop.

use crate::error::{Error, Result};
use crate::model::{ModelParams, ParamGrads, PARAM_TENSORS};
use crate::note_matrix::{unscale, ScalingParams, ROW_WIDTH};
use crate::numerics::{Tensor, TensorError};

#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub mse: f64,
    /// `d mse / d predictions`
    pub grad: Tensor,
}

/// `mse = Σ (y − ŷ)² / N` over all `N` entries; `grad = 2 (ŷ − y) / N`.
pub fn mse(predictions: &Tensor, targets: &Tensor) -> Result<LossValue> {
    let diff = predictions.sub(targets)?;
    let n = diff.len().max(1) as f64;
    Ok(LossValue {
        mse: diff.sum_squares() / n,
        grad: diff.scale(2.0 / n),
    })
}

/// Fraction of entries whose prediction and target land on the same note
/// value after unscaling: the same pitch step, the same velocity step and the
/// same inter-onset tick count.
pub fn accuracy(predictions: &Tensor, targets: &Tensor, scaling: &ScalingParams) -> Result<f64> {
    if predictions.shape() != targets.shape() || predictions.shape().last() != Some(&ROW_WIDTH) {
        return Err(TensorError::ShapeMismatch {
            op: "accuracy",
            left: predictions.shape().to_vec(),
            right: targets.shape().to_vec(),
        }
        .into());
    }
    if predictions.is_empty() {
        return Ok(1.0);
    }
    let mut correct = 0usize;
    for (p, t) in predictions
        .data()
        .chunks(ROW_WIDTH)
        .zip(targets.data().chunks(ROW_WIDTH))
    {
        let (p, t) = (unscale(p, scaling), unscale(t, scaling));
        correct += usize::from(p.pitch == t.pitch)
            + usize::from(p.velocity == t.velocity)
            + usize::from(p.dt_ticks == t.dt_ticks);
    }
    Ok(correct as f64 / predictions.len() as f64)
}

/// Rescales `grads` so their joint L2 norm is at most `max_norm`. Returns
/// the norm before clipping.
pub fn clip_global_norm(grads: &mut ParamGrads, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm && norm.is_finite() {
        let k = max_norm / norm;
        for t in grads.tensors_mut() {
            for g in t.data_mut() {
                *g *= k;
            }
        }
    }
    norm
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmspropConfig {
    pub lr: f64,
    pub rho: f64,
    pub epsilon: f64,
}

impl Default for RmspropConfig {
    fn default() -> Self {
        RmspropConfig {
            lr: 1e-4,
            rho: 0.9,
            epsilon: 1e-8,
        }
    }
}

/// Running mean of squared gradients, one tensor per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct RmspropState {
    pub config: RmspropConfig,
    pub mean_square: Vec<Tensor>,
}

impl RmspropState {
    pub fn new(config: RmspropConfig, params: &ModelParams) -> Self {
        RmspropState {
            config,
            mean_square: params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect(),
        }
    }

    /// One update of every parameter tensor. Nothing is modified when any
    /// gradient entry is non-finite.
    pub fn step(&mut self, params: &mut ModelParams, grads: &ParamGrads) -> Result<()> {
        if self.mean_square.len() != PARAM_TENSORS {
            return Err(Error::InvalidConfig("optimizer state does not match the model".into()));
        }
        let mut params = params.tensors_mut();
        let grads = grads.tensors();
        rmsprop_step(&mut params, &grads, &mut self.mean_square, &self.config)
    }
}

/// `v ← ρ v + (1 − ρ) g²;  p ← p − lr · g / (√v + ε)` for each tensor.
pub fn rmsprop_step(
    params: &mut [&mut Tensor],
    grads: &[&Tensor],
    mean_square: &mut [Tensor],
    config: &RmspropConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != mean_square.len() {
        return Err(Error::InvalidConfig(format!(
            "{} parameter tensors, {} gradients, {} accumulators",
            params.len(),
            grads.len(),
            mean_square.len()
        )));
    }
    for ((p, g), v) in params.iter().zip(grads).zip(mean_square.iter()) {
        for (a, b) in [(p.shape(), g.shape()), (p.shape(), v.shape())] {
            if a != b {
                return Err(TensorError::ShapeMismatch {
                    op: "rmsprop",
                    left: a.to_vec(),
                    right: b.to_vec(),
                }
                .into());
            }
        }
    }
    if !grads.iter().all(|g| g.is_finite()) {
        return Err(Error::NonFiniteGradient);
    }
    let RmspropConfig { lr, rho, epsilon } = *config;
    for ((p, g), v) in params.iter_mut().zip(grads).zip(mean_square.iter_mut()) {
        for ((pv, &gv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
            *vv = rho * *vv + (1.0 - rho) * gv * gv;
            *pv -= lr * gv / (vv.sqrt() + epsilon);
        }
    }
    Ok(())
}

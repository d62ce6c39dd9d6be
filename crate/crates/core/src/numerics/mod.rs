//! Dense tensors, a fixed pseudo-random generator and parameter
//! initialisers. Everything the model computes goes through here.

mod rng;
mod tensor;

pub use rng::Rng;
pub use tensor::{gemm_acc, gemm_at_acc, gemm_bt_acc, sigmoid, Tensor, TensorError};

/// Glorot/Xavier uniform initialisation on `[-L, L]`, `L = sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform(rng: &mut Rng, fan_in: usize, fan_out: usize, shape: &[usize]) -> Tensor {
    assert!(fan_in > 0 && fan_out > 0, "fans must be positive");
    let limit = glorot_limit(fan_in, fan_out);
    let mut t = Tensor::zeros(shape);
    for x in t.data_mut() {
        *x = rng.uniform(-limit, limit);
    }
    t
}

pub fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Independent {0, 1} draws, each 1 with probability `keep_prob`.
pub fn bernoulli_mask(rng: &mut Rng, shape: &[usize], keep_prob: f64) -> Result<Tensor, TensorError> {
    if !(keep_prob > 0.0 && keep_prob <= 1.0) {
        return Err(TensorError::BadProbability(keep_prob));
    }
    let mut t = Tensor::zeros(shape);
    for x in t.data_mut() {
        *x = if rng.next_f64() < keep_prob { 1.0 } else { 0.0 };
    }
    Ok(t)
}

//! LSTM → dropout → dense → linear activation, with hand-written
//! backpropagation through time.
//!
//! Gate blocks in the kernel, recurrent kernel and bias are laid out as
//! `(input, forget, cell candidate, output)`, each `hidden` columns wide.
//! For one step:
//!
//! ```text
//! z   = x_t · kernel + h_{t-1} · recurrent_kernel + bias
//! i, f, o = sigmoid(z_i), sigmoid(z_f), sigmoid(z_o);  g = tanh(z_g)
//! c_t = f ⊙ c_{t-1} + i ⊙ g
//! h_t = o ⊙ tanh(c_t)
//! ```
//!
//! The network is many-to-one: only the last hidden state reaches the
//! dropout and dense layers.

use crate::error::{Error, Result};
use crate::numerics::{bernoulli_mask, gemm_acc, gemm_at_acc, gemm_bt_acc, glorot_uniform, sigmoid, Rng, Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub hidden: usize,
    pub output_dim: usize,
    pub window: usize,
    pub dropout_rate: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_dim: 3,
            hidden: 512,
            output_dim: 3,
            window: 50,
            dropout_rate: 0.75,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden == 0 || self.output_dim == 0 || self.window == 0 {
            return Err(Error::InvalidConfig(format!("model dimensions must be positive: {self:?}")));
        }
        check_rate(self.dropout_rate)
    }
}

fn check_rate(rate: f64) -> Result<()> {
    if (0.0..1.0).contains(&rate) {
        Ok(())
    } else {
        Err(Error::BadRate(rate))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    /// `[input_dim, 4 * hidden]`
    pub kernel: Tensor,
    /// `[hidden, 4 * hidden]`
    pub recurrent_kernel: Tensor,
    /// `[4 * hidden]`
    pub bias: Tensor,
}

impl LstmParams {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        LstmParams {
            kernel: Tensor::zeros(&[input_dim, 4 * hidden]),
            recurrent_kernel: Tensor::zeros(&[hidden, 4 * hidden]),
            bias: Tensor::zeros(&[4 * hidden]),
        }
    }

    /// Glorot-uniform kernels; bias zero except the forget block, which
    /// starts at 1.
    pub fn init(input_dim: usize, hidden: usize, rng: &mut Rng) -> Self {
        let mut bias = Tensor::zeros(&[4 * hidden]);
        bias.data_mut()[hidden..2 * hidden].fill(1.0);
        LstmParams {
            kernel: glorot_uniform(rng, input_dim, 4 * hidden, &[input_dim, 4 * hidden]),
            recurrent_kernel: glorot_uniform(rng, hidden, 4 * hidden, &[hidden, 4 * hidden]),
            bias,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.kernel.shape()[0]
    }

    pub fn hidden(&self) -> usize {
        self.recurrent_kernel.shape()[0]
    }

    fn check(&self) -> Result<(usize, usize)> {
        let h = self.hidden();
        let d = self.input_dim();
        let ok = self.kernel.shape() == [d, 4 * h]
            && self.recurrent_kernel.shape() == [h, 4 * h]
            && self.bias.shape() == [4 * h];
        if !ok {
            return Err(TensorError::ShapeMismatch {
                op: "lstm params",
                left: self.kernel.shape().to_vec(),
                right: self.recurrent_kernel.shape().to_vec(),
            }
            .into());
        }
        Ok((d, h))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    /// `[hidden, output_dim]`
    pub weights: Tensor,
    /// `[output_dim]`
    pub bias: Tensor,
}

impl DenseParams {
    pub fn zeros(hidden: usize, output_dim: usize) -> Self {
        DenseParams {
            weights: Tensor::zeros(&[hidden, output_dim]),
            bias: Tensor::zeros(&[output_dim]),
        }
    }

    pub fn init(hidden: usize, output_dim: usize, rng: &mut Rng) -> Self {
        DenseParams {
            weights: glorot_uniform(rng, hidden, output_dim, &[hidden, output_dim]),
            bias: Tensor::zeros(&[output_dim]),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub lstm: LstmParams,
    pub dense: DenseParams,
    pub window: usize,
    pub dropout_rate: f64,
}

/// Number of parameter tensors, in the order of [`ModelParams::tensors`].
pub const PARAM_TENSORS: usize = 5;

/// Names used in metrics and diagnostics, same order as [`ModelParams::tensors`].
pub const PARAM_NAMES: [&str; PARAM_TENSORS] = [
    "lstm/kernel",
    "lstm/recurrent_kernel",
    "lstm/bias",
    "dense/kernel",
    "dense/bias",
];

impl ModelParams {
    pub fn init(config: &ModelConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let lstm = LstmParams::init(config.input_dim, config.hidden, rng);
        let dense = DenseParams::init(config.hidden, config.output_dim, rng);
        Ok(ModelParams {
            lstm,
            dense,
            window: config.window,
            dropout_rate: config.dropout_rate,
        })
    }

    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        Ok(ModelParams {
            lstm: LstmParams::zeros(config.input_dim, config.hidden),
            dense: DenseParams::zeros(config.hidden, config.output_dim),
            window: config.window,
            dropout_rate: config.dropout_rate,
        })
    }

    pub fn config(&self) -> ModelConfig {
        ModelConfig {
            input_dim: self.lstm.input_dim(),
            hidden: self.lstm.hidden(),
            output_dim: self.output_dim(),
            window: self.window,
            dropout_rate: self.dropout_rate,
        }
    }

    pub fn hidden(&self) -> usize {
        self.lstm.hidden()
    }

    pub fn output_dim(&self) -> usize {
        self.dense.bias.len()
    }

    pub fn tensors(&self) -> [&Tensor; PARAM_TENSORS] {
        [
            &self.lstm.kernel,
            &self.lstm.recurrent_kernel,
            &self.lstm.bias,
            &self.dense.weights,
            &self.dense.bias,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; PARAM_TENSORS] {
        [
            &mut self.lstm.kernel,
            &mut self.lstm.recurrent_kernel,
            &mut self.lstm.bias,
            &mut self.dense.weights,
            &mut self.dense.bias,
        ]
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

/// Gradients for every tensor of a [`ModelParams`], same shapes and order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub kernel: Tensor,
    pub recurrent_kernel: Tensor,
    pub lstm_bias: Tensor,
    pub dense_weights: Tensor,
    pub dense_bias: Tensor,
}

impl ParamGrads {
    pub fn zeros_like(params: &ModelParams) -> Self {
        let [k, r, b, w, db] = params.tensors().map(|t| Tensor::zeros(t.shape()));
        ParamGrads {
            kernel: k,
            recurrent_kernel: r,
            lstm_bias: b,
            dense_weights: w,
            dense_bias: db,
        }
    }

    pub fn tensors(&self) -> [&Tensor; PARAM_TENSORS] {
        [
            &self.kernel,
            &self.recurrent_kernel,
            &self.lstm_bias,
            &self.dense_weights,
            &self.dense_bias,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; PARAM_TENSORS] {
        [
            &mut self.kernel,
            &mut self.recurrent_kernel,
            &mut self.lstm_bias,
            &mut self.dense_weights,
            &mut self.dense_bias,
        ]
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors().iter().map(|t| t.sum_squares()).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }
}

// ---------------------------------------------------------------------------
// LSTM

/// Everything [`lstm_backward`] needs from a forward pass.
#[derive(Debug, Clone)]
pub struct LstmCache {
    input: Tensor,
    hidden: usize,
    /// Per step, activated gates `[B, 4H]`.
    gates: Vec<Vec<f64>>,
    /// `T + 1` cell states `[B, H]`, starting with `c0`.
    cells: Vec<Vec<f64>>,
    /// `T + 1` hidden states `[B, H]`, starting with `h0`.
    hiddens: Vec<Vec<f64>>,
    /// Per step, `tanh(c_t)`.
    tanh_cells: Vec<Vec<f64>>,
}

impl LstmCache {
    pub fn steps(&self) -> usize {
        self.gates.len()
    }

    pub fn batch(&self) -> usize {
        self.input.shape()[0]
    }

    /// Cell state after step `t` (`t = 0` is the initial state).
    pub fn cell(&self, t: usize) -> &[f64] {
        &self.cells[t]
    }

    pub fn hidden_state(&self, t: usize) -> &[f64] {
        &self.hiddens[t]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmGrads {
    pub kernel: Tensor,
    pub recurrent_kernel: Tensor,
    pub bias: Tensor,
    /// `[B, T, input_dim]`
    pub input: Tensor,
}

fn step_input(input: &[f64], batch: usize, steps: usize, dim: usize, t: usize) -> Vec<f64> {
    let mut x = Vec::with_capacity(batch * dim);
    for b in 0..batch {
        let at = (b * steps + t) * dim;
        x.extend_from_slice(&input[at..at + dim]);
    }
    x
}

/// Runs the recurrence over `input: [B, T, input_dim]` from `(h0, c0)` and
/// returns the last hidden state `[B, hidden]`.
pub fn lstm_forward(params: &LstmParams, input: &Tensor, h0: &Tensor, c0: &Tensor) -> Result<(Tensor, LstmCache)> {
    let (d, h) = params.check()?;
    let &[batch, steps, dim] = input.shape() else {
        return Err(shape_err("lstm input", input.shape(), &[0, 0, d]));
    };
    if dim != d || steps == 0 {
        return Err(shape_err("lstm input", input.shape(), &[batch, steps.max(1), d]));
    }
    for state in [h0, c0] {
        if state.shape() != [batch, h] {
            return Err(shape_err("lstm initial state", state.shape(), &[batch, h]));
        }
    }
    let g4 = 4 * h;
    let mut cache = LstmCache {
        input: input.clone(),
        hidden: h,
        gates: Vec::with_capacity(steps),
        cells: vec![c0.data().to_vec()],
        hiddens: vec![h0.data().to_vec()],
        tanh_cells: Vec::with_capacity(steps),
    };
    let bias = params.bias.data();
    for t in 0..steps {
        let x = step_input(input.data(), batch, steps, d, t);
        let mut z = Vec::with_capacity(batch * g4);
        for _ in 0..batch {
            z.extend_from_slice(bias);
        }
        gemm_acc(&x, params.kernel.data(), &mut z, batch, d, g4);
        gemm_acc(&cache.hiddens[t], params.recurrent_kernel.data(), &mut z, batch, h, g4);

        let c_prev = &cache.cells[t];
        let mut c = vec![0.0; batch * h];
        let mut tc = vec![0.0; batch * h];
        let mut hn = vec![0.0; batch * h];
        for b in 0..batch {
            let zb = &mut z[b * g4..(b + 1) * g4];
            for j in 0..h {
                let i = sigmoid(zb[j]);
                let f = sigmoid(zb[h + j]);
                let g = zb[2 * h + j].tanh();
                let o = sigmoid(zb[3 * h + j]);
                zb[j] = i;
                zb[h + j] = f;
                zb[2 * h + j] = g;
                zb[3 * h + j] = o;
                let k = b * h + j;
                c[k] = f * c_prev[k] + i * g;
                tc[k] = c[k].tanh();
                hn[k] = o * tc[k];
            }
        }
        cache.gates.push(z);
        cache.cells.push(c);
        cache.tanh_cells.push(tc);
        cache.hiddens.push(hn);
    }
    let last = Tensor::new(&[batch, h], cache.hiddens[steps].clone())?;
    Ok((last, cache))
}

/// Backpropagation through the whole window given `d loss / d h_T`.
pub fn lstm_backward(params: &LstmParams, cache: &LstmCache, grad_last: &Tensor) -> Result<LstmGrads> {
    let (d, h) = params.check()?;
    let batch = cache.batch();
    let steps = cache.steps();
    if cache.hidden != h || cache.input.shape()[2] != d {
        return Err(Error::CacheMismatch(format!(
            "cache built for hidden {} / input {}, params have {h} / {d}",
            cache.hidden,
            cache.input.shape()[2]
        )));
    }
    if grad_last.shape() != [batch, h] {
        return Err(Error::CacheMismatch(format!(
            "upstream gradient {:?}, expected [{batch}, {h}]",
            grad_last.shape()
        )));
    }
    let g4 = 4 * h;
    let mut d_kernel = vec![0.0; d * g4];
    let mut d_recurrent = vec![0.0; h * g4];
    let mut d_bias = vec![0.0; g4];
    let mut d_input = vec![0.0; batch * steps * d];
    let mut dh = grad_last.data().to_vec();
    let mut dc = vec![0.0; batch * h];
    let mut dz = vec![0.0; batch * g4];

    for t in (0..steps).rev() {
        let gates = &cache.gates[t];
        let c_prev = &cache.cells[t];
        let tc = &cache.tanh_cells[t];
        for b in 0..batch {
            let gb = &gates[b * g4..(b + 1) * g4];
            let db = &mut dz[b * g4..(b + 1) * g4];
            for j in 0..h {
                let k = b * h + j;
                let (i, f, g, o) = (gb[j], gb[h + j], gb[2 * h + j], gb[3 * h + j]);
                let dhk = dh[k];
                let dck = dc[k] + dhk * o * (1.0 - tc[k] * tc[k]);
                db[j] = dck * g * i * (1.0 - i);
                db[h + j] = dck * c_prev[k] * f * (1.0 - f);
                db[2 * h + j] = dck * i * (1.0 - g * g);
                db[3 * h + j] = dhk * tc[k] * o * (1.0 - o);
                dc[k] = dck * f;
            }
        }
        let x = step_input(cache.input.data(), batch, steps, d, t);
        gemm_at_acc(&x, &dz, &mut d_kernel, batch, d, g4);
        gemm_at_acc(&cache.hiddens[t], &dz, &mut d_recurrent, batch, h, g4);
        for b in 0..batch {
            for (acc, v) in d_bias.iter_mut().zip(&dz[b * g4..(b + 1) * g4]) {
                *acc += v;
            }
        }
        let mut dx = vec![0.0; batch * d];
        gemm_bt_acc(&dz, params.kernel.data(), &mut dx, batch, g4, d);
        for b in 0..batch {
            let at = (b * steps + t) * d;
            d_input[at..at + d].copy_from_slice(&dx[b * d..(b + 1) * d]);
        }
        dh.fill(0.0);
        gemm_bt_acc(&dz, params.recurrent_kernel.data(), &mut dh, batch, g4, h);
    }

    Ok(LstmGrads {
        kernel: Tensor::new(&[d, g4], d_kernel)?,
        recurrent_kernel: Tensor::new(&[h, g4], d_recurrent)?,
        bias: Tensor::new(&[g4], d_bias)?,
        input: Tensor::new(&[batch, steps, d], d_input)?,
    })
}

fn shape_err(op: &'static str, got: &[usize], want: &[usize]) -> Error {
    TensorError::ShapeMismatch {
        op,
        left: got.to_vec(),
        right: want.to_vec(),
    }
    .into()
}

// ---------------------------------------------------------------------------
// Dropout

/// Inverted dropout. Returns the output and the {0, 1} keep mask; in
/// inference mode the output is `x` and the mask is all ones.
pub fn dropout_forward(x: &Tensor, rate: f64, mode: Mode, rng: &mut Rng) -> Result<(Tensor, Tensor)> {
    check_rate(rate)?;
    match mode {
        Mode::Infer => Ok((x.clone(), Tensor::ones(x.shape()))),
        Mode::Train => {
            let keep = 1.0 - rate;
            let mask = bernoulli_mask(rng, x.shape(), keep)?;
            let y = x.mul(&mask)?.scale(1.0 / keep);
            Ok((y, mask))
        }
    }
}

pub fn dropout_backward(grad_y: &Tensor, mask: &Tensor, rate: f64) -> Result<Tensor> {
    check_rate(rate)?;
    Ok(grad_y.mul(mask)?.scale(1.0 / (1.0 - rate)))
}

// ---------------------------------------------------------------------------
// Dense

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads {
    pub weights: Tensor,
    pub bias: Tensor,
    pub input: Tensor,
}

/// `y = h · W + b`
pub fn dense_forward(params: &DenseParams, h: &Tensor) -> Result<Tensor> {
    let mut y = h.matmul(&params.weights)?;
    let out = params.bias.len();
    if params.weights.shape()[1] != out {
        return Err(shape_err("dense bias", params.bias.shape(), &[params.weights.shape()[1]]));
    }
    for row in y.data_mut().chunks_mut(out) {
        for (v, b) in row.iter_mut().zip(params.bias.data()) {
            *v += b;
        }
    }
    Ok(y)
}

pub fn dense_backward(params: &DenseParams, h: &Tensor, grad_y: &Tensor) -> Result<DenseGrads> {
    let weights = h.transposed_matmul(grad_y)?;
    if weights.shape() != params.weights.shape() {
        return Err(shape_err("dense backward", weights.shape(), params.weights.shape()));
    }
    let out = params.bias.len();
    let mut bias = Tensor::zeros(&[out]);
    for row in grad_y.data().chunks(out) {
        for (acc, g) in bias.data_mut().iter_mut().zip(row) {
            *acc += g;
        }
    }
    let input = grad_y.matmul_transposed(&params.weights)?;
    Ok(DenseGrads { weights, bias, input })
}

// ---------------------------------------------------------------------------
// Whole model

#[derive(Debug, Clone)]
pub struct ModelCache {
    pub lstm: LstmCache,
    /// Dropout output, the dense layer's input.
    pub dropped: Tensor,
    pub mask: Tensor,
    pub mode: Mode,
}

/// `inputs: [B, window, input_dim]` → predictions `[B, output_dim]`.
pub fn model_forward(params: &ModelParams, inputs: &Tensor, mode: Mode, rng: &mut Rng) -> Result<(Tensor, ModelCache)> {
    let shape = inputs.shape();
    if shape.len() != 3 || shape[1] != params.window {
        return Err(shape_err(
            "model input",
            shape,
            &[shape.first().copied().unwrap_or(0), params.window, params.lstm.input_dim()],
        ));
    }
    let batch = shape[0];
    let zeros = Tensor::zeros(&[batch, params.hidden()]);
    let (last, lstm) = lstm_forward(&params.lstm, inputs, &zeros, &zeros)?;
    let (dropped, mask) = dropout_forward(&last, params.dropout_rate, mode, rng)?;
    // Linear activation: the dense output is the prediction.
    let predictions = dense_forward(&params.dense, &dropped)?;
    Ok((
        predictions,
        ModelCache {
            lstm,
            dropped,
            mask,
            mode,
        },
    ))
}

/// Deterministic inference-mode forward pass.
pub fn predict(params: &ModelParams, inputs: &Tensor) -> Result<Tensor> {
    // Inference never draws from the generator.
    let mut unused = Rng::new(0);
    Ok(model_forward(params, inputs, Mode::Infer, &mut unused)?.0)
}

pub fn model_backward(params: &ModelParams, cache: &ModelCache, grad_predictions: &Tensor) -> Result<ParamGrads> {
    if cache.dropped.shape() != [grad_predictions.shape()[0], params.hidden()] {
        return Err(Error::CacheMismatch(format!(
            "cache holds {:?} hidden activations, gradient is {:?}",
            cache.dropped.shape(),
            grad_predictions.shape()
        )));
    }
    let dense = dense_backward(&params.dense, &cache.dropped, grad_predictions)?;
    let grad_last = match cache.mode {
        Mode::Train => dropout_backward(&dense.input, &cache.mask, params.dropout_rate)?,
        Mode::Infer => dense.input,
    };
    let lstm = lstm_backward(&params.lstm, &cache.lstm, &grad_last)?;
    Ok(ParamGrads {
        kernel: lstm.kernel,
        recurrent_kernel: lstm.recurrent_kernel,
        lstm_bias: lstm.bias,
        dense_weights: dense.weights,
        dense_bias: dense.bias,
    })
}

//! Standalone layer primitives with input validation.
//!
//! These are the inference-side building blocks (the training path records
//! the same math on the tape). They operate on plain tensors so tests can
//! drive them directly against independent references.

use crate::error::{CoreError, Result};
use crate::kernels;
use crate::scalar::{fl, Scalar};
use crate::tensor::Tensor;

pub const LAYERNORM_EPS: f64 = 1e-5;

/// Multi-head attention geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct MhaConfig {
    pub model_dim: usize,
    pub num_heads: usize,
}

impl MhaConfig {
    pub fn new(model_dim: usize, num_heads: usize) -> Result<Self> {
        if model_dim == 0 || num_heads == 0 || !model_dim.is_multiple_of(num_heads) {
            return Err(CoreError::Config(format!(
                "model_dim {model_dim} must be a positive multiple of num_heads {num_heads}"
            )));
        }
        Ok(MhaConfig { model_dim, num_heads })
    }

    pub fn head_dim(&self) -> usize {
        self.model_dim / self.num_heads
    }
}

/// Max-subtracted softmax along `axis`.
pub fn softmax<F: Scalar>(logits: &Tensor<F>, axis: usize) -> Result<Tensor<F>> {
    let shape = logits.shape();
    if axis >= shape.len() {
        return Err(CoreError::InvalidArgument(format!(
            "softmax axis {axis} out of range for shape {shape:?}"
        )));
    }
    logits.ensure_finite("softmax input")?;
    let axis_len = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let mut out = logits.data().to_vec();
    let mut lane = vec![F::zero(); axis_len];
    for o in 0..outer {
        for i in 0..inner {
            let base = o * axis_len * inner + i;
            for (j, l) in lane.iter_mut().enumerate() {
                *l = out[base + j * inner];
            }
            kernels::softmax_row(&mut lane, axis_len);
            for (j, &l) in lane.iter().enumerate() {
                out[base + j * inner] = l;
            }
        }
    }
    Tensor::new(shape.to_vec(), out)
}

/// Layer normalization over the last axis with learned gain and bias.
pub fn layernorm<F: Scalar>(x: &Tensor<F>, gain: &[F], bias: &[F]) -> Result<Tensor<F>> {
    let n = x.cols();
    if n < 2 {
        return Err(CoreError::InvalidArgument(
            "layernorm requires last-axis length >= 2".into(),
        ));
    }
    if gain.len() != n || bias.len() != n {
        return Err(CoreError::Shape(format!(
            "layernorm gain/bias length must be {n}"
        )));
    }
    let rows = x.rows();
    let mut out = vec![F::zero(); rows * n];
    for r in 0..rows {
        kernels::layernorm_row(
            x.row(r),
            gain,
            bias,
            fl(LAYERNORM_EPS),
            &mut out[r * n..(r + 1) * n],
        );
    }
    Tensor::new(x.shape().to_vec(), out)
}

/// Projection weights for one attention block. Weight matrices are stored
/// `[out_dim, in_dim]`; biases are optional.
pub struct MhaParams<'a, F: Scalar> {
    pub wq: &'a [F],
    pub bq: Option<&'a [F]>,
    pub wk: &'a [F],
    pub bk: Option<&'a [F]>,
    pub wv: &'a [F],
    pub bv: Option<&'a [F]>,
    pub wo: &'a [F],
    pub bo: Option<&'a [F]>,
}

/// Full multi-head attention: project, attend per head with 1/sqrt(head_dim)
/// scaling, concatenate, re-project. Returns the output and the attention
/// weights laid out `[head][query][key]`.
pub fn mha_forward<F: Scalar>(
    query: &Tensor<F>,
    key: &Tensor<F>,
    value: &Tensor<F>,
    cfg: &MhaConfig,
    p: &MhaParams<'_, F>,
) -> Result<(Tensor<F>, Vec<F>)> {
    let d = cfg.model_dim;
    if query.cols() != d || key.cols() != d || value.cols() != d {
        return Err(CoreError::Shape(format!(
            "attention inputs must have {d} columns (got q={}, k={}, v={})",
            query.cols(),
            key.cols(),
            value.cols()
        )));
    }
    if key.rows() != value.rows() {
        return Err(CoreError::Shape("key/value row counts differ".into()));
    }
    if key.rows() == 0 || query.rows() == 0 {
        return Err(CoreError::InvalidArgument("attention over zero rows".into()));
    }
    let nq = query.rows();
    let nk = key.rows();
    let h = cfg.num_heads;
    let hd = cfg.head_dim();
    let scale = fl::<F>(1.0 / (hd as f64).sqrt());

    let mut q = vec![F::zero(); nq * d];
    let mut k = vec![F::zero(); nk * d];
    let mut v = vec![F::zero(); nk * d];
    for r in 0..nq {
        kernels::linear_row(query.row(r), p.wq, p.bq, &mut q[r * d..(r + 1) * d]);
    }
    for r in 0..nk {
        kernels::linear_row(key.row(r), p.wk, p.bk, &mut k[r * d..(r + 1) * d]);
        kernels::linear_row(value.row(r), p.wv, p.bv, &mut v[r * d..(r + 1) * d]);
    }

    let mut ctx = vec![F::zero(); nq * d];
    let mut attn = vec![F::zero(); h * nq * nk];
    for head in 0..h {
        let off = head * hd;
        for i in 0..nq {
            let row = &mut attn[head * nq * nk + i * nk..head * nq * nk + (i + 1) * nk];
            for j in 0..nk {
                let mut dot = F::zero();
                for dd in 0..hd {
                    dot = dot + q[i * d + off + dd] * k[j * d + off + dd];
                }
                row[j] = dot * scale;
            }
            kernels::softmax_row(row, nk);
            for dd in 0..hd {
                let mut acc = F::zero();
                for j in 0..nk {
                    acc = acc + row[j] * v[j * d + off + dd];
                }
                ctx[i * d + off + dd] = acc;
            }
        }
    }

    let mut out = vec![F::zero(); nq * d];
    for r in 0..nq {
        kernels::linear_row(&ctx[r * d..(r + 1) * d], p.wo, p.bo, &mut out[r * d..(r + 1) * d]);
    }
    Ok((Tensor::matrix(nq, d, out)?, attn))
}

/// LSTM cell weights; gate layout is [input, forget, cell, output].
pub struct LstmParams<'a, F: Scalar> {
    pub w_ih: &'a [F],
    pub b_ih: &'a [F],
    pub w_hh: &'a [F],
    pub b_hh: &'a [F],
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState<F: Scalar> {
    pub h: Vec<F>,
    pub c: Vec<F>,
}

impl<F: Scalar> LstmState<F> {
    pub fn zeros(hidden: usize) -> Self {
        LstmState { h: vec![F::zero(); hidden], c: vec![F::zero(); hidden] }
    }
}

/// One LSTM step; returns the new state (h is also the step output).
pub fn lstm_step<F: Scalar>(
    x: &[F],
    state: &LstmState<F>,
    p: &LstmParams<'_, F>,
) -> Result<LstmState<F>> {
    let hidden = state.h.len();
    if state.c.len() != hidden {
        return Err(CoreError::Shape("LSTM state h/c length mismatch".into()));
    }
    if p.w_ih.len() != 4 * hidden * x.len() || p.w_hh.len() != 4 * hidden * hidden {
        return Err(CoreError::Shape("LSTM weight shape mismatch".into()));
    }
    let mut gates = vec![F::zero(); 4 * hidden];
    kernels::lstm_gate_preact(x, &state.h, p.w_ih, p.b_ih, p.w_hh, p.b_hh, &mut gates);
    let mut new = state.clone();
    kernels::lstm_cell_apply(&mut gates, &mut new.h, &mut new.c, hidden);
    Ok(new)
}

/// Bidirectional LSTM over a sequence followed by a linear projection of the
/// per-step [forward, backward] concatenation. `w_proj` is
/// `[out_dim, 2*hidden]`. Reversing the input reverses the output rows when
/// the direction parameters are swapped.
pub fn blstm_forward<F: Scalar>(
    seq: &Tensor<F>,
    hidden: usize,
    fwd: &LstmParams<'_, F>,
    bwd: &LstmParams<'_, F>,
    w_proj: &[F],
    b_proj: Option<&[F]>,
    out_dim: usize,
) -> Result<Tensor<F>> {
    let t_len = seq.rows();
    if t_len == 0 {
        return Err(CoreError::InvalidArgument("empty sequence".into()));
    }
    let mut hf = vec![F::zero(); t_len * hidden];
    let mut state = LstmState::zeros(hidden);
    for t in 0..t_len {
        state = lstm_step(seq.row(t), &state, fwd)?;
        hf[t * hidden..(t + 1) * hidden].copy_from_slice(&state.h);
    }
    let mut hb = vec![F::zero(); t_len * hidden];
    let mut state = LstmState::zeros(hidden);
    for t in (0..t_len).rev() {
        state = lstm_step(seq.row(t), &state, bwd)?;
        hb[t * hidden..(t + 1) * hidden].copy_from_slice(&state.h);
    }
    let mut out = vec![F::zero(); t_len * out_dim];
    let mut cat = vec![F::zero(); 2 * hidden];
    for t in 0..t_len {
        cat[..hidden].copy_from_slice(&hf[t * hidden..(t + 1) * hidden]);
        cat[hidden..].copy_from_slice(&hb[t * hidden..(t + 1) * hidden]);
        kernels::linear_row(&cat, w_proj, b_proj, &mut out[t * out_dim..(t + 1) * out_dim]);
    }
    Tensor::matrix(t_len, out_dim, out)
}

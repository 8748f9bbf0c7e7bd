//! Low-level compute kernels shared by the autodiff tape and the streaming
//! inference path. Keeping one implementation of each primitive keeps the two
//! paths numerically consistent.
//!
//! All matrices are row-major flat slices.

use crate::scalar::{fl, Scalar};

/// out[m,n] = a[m,k] @ b[k,n]. `out` is overwritten.
pub fn matmul<F: Scalar>(a: &[F], b: &[F], out: &mut [F], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    out.fill(F::zero());
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let out_row = &mut out[i * n..(i + 1) * n];
        for (kk, &av) in a_row.iter().enumerate() {
            if av == F::zero() {
                continue;
            }
            let b_row = &b[kk * n..(kk + 1) * n];
            for j in 0..n {
                out_row[j] = out_row[j] + av * b_row[j];
            }
        }
    }
}

/// out[m,n] = a[m,k] @ b[n,k]^T. Row i of `out` is the dot of a's row i with
/// each row of `b`; this is the natural layout for weight matrices stored as
/// `[out_dim, in_dim]`.
pub fn matmul_tb<F: Scalar>(a: &[F], b: &[F], out: &mut [F], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let out_row = &mut out[i * n..(i + 1) * n];
        for j in 0..n {
            let b_row = &b[j * k..(j + 1) * k];
            let mut acc = F::zero();
            for kk in 0..k {
                acc = acc + a_row[kk] * b_row[kk];
            }
            out_row[j] = acc;
        }
    }
}

/// y = x @ w^T + b for a single row vector x. w is [out_dim, in_dim].
pub fn linear_row<F: Scalar>(x: &[F], w: &[F], b: Option<&[F]>, out: &mut [F]) {
    let in_dim = x.len();
    let out_dim = out.len();
    debug_assert_eq!(w.len(), out_dim * in_dim);
    for j in 0..out_dim {
        let w_row = &w[j * in_dim..(j + 1) * in_dim];
        let mut acc = match b {
            Some(bias) => bias[j],
            None => F::zero(),
        };
        for kk in 0..in_dim {
            acc = acc + x[kk] * w_row[kk];
        }
        out[j] = acc;
    }
}

/// In-place max-subtracted softmax over the first `valid` entries of `row`;
/// entries past `valid` are set to zero.
pub fn softmax_row<F: Scalar>(row: &mut [F], valid: usize) {
    debug_assert!(valid >= 1 && valid <= row.len());
    let mut mx = row[0];
    for &v in &row[1..valid] {
        if v > mx {
            mx = v;
        }
    }
    let mut sum = F::zero();
    for v in row[..valid].iter_mut() {
        *v = (*v - mx).exp();
        sum = sum + *v;
    }
    for v in row[..valid].iter_mut() {
        *v = *v / sum;
    }
    for v in row[valid..].iter_mut() {
        *v = F::zero();
    }
}

/// Layer normalization of one row with learned gain/bias.
/// Returns (mean, rstd) for backward caching. Variance is the biased
/// (population) estimate, regularized by `eps`.
pub fn layernorm_row<F: Scalar>(x: &[F], gain: &[F], bias: &[F], eps: F, out: &mut [F]) -> (F, F) {
    let n = x.len();
    debug_assert!(n >= 1);
    let nf = fl::<F>(n as f64);
    let mut mean = F::zero();
    for &v in x {
        mean = mean + v;
    }
    mean = mean / nf;
    let mut var = F::zero();
    for &v in x {
        let d = v - mean;
        var = var + d * d;
    }
    var = var / nf;
    let rstd = (var + eps).sqrt().recip();
    for i in 0..n {
        out[i] = (x[i] - mean) * rstd * gain[i] + bias[i];
    }
    (mean, rstd)
}

#[inline]
pub fn sigmoid<F: Scalar>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

/// One LSTM cell step. Gate layout in `gates` is [i, f, g, o], each of width
/// `hidden`; `gates` holds the pre-activation sums and is overwritten with
/// the activated values. `h` and `c` are updated in place.
pub fn lstm_cell_apply<F: Scalar>(gates: &mut [F], h: &mut [F], c: &mut [F], hidden: usize) {
    debug_assert_eq!(gates.len(), 4 * hidden);
    for j in 0..hidden {
        let i = sigmoid(gates[j]);
        let f = sigmoid(gates[hidden + j]);
        let g = gates[2 * hidden + j].tanh();
        let o = sigmoid(gates[3 * hidden + j]);
        gates[j] = i;
        gates[hidden + j] = f;
        gates[2 * hidden + j] = g;
        gates[3 * hidden + j] = o;
        let cc = f * c[j] + i * g;
        c[j] = cc;
        h[j] = o * cc.tanh();
    }
}

/// Pre-activation gate sums for one LSTM step:
/// gates = x @ w_ih^T + b_ih + h @ w_hh^T + b_hh.
pub fn lstm_gate_preact<F: Scalar>(
    x: &[F],
    h: &[F],
    w_ih: &[F],
    b_ih: &[F],
    w_hh: &[F],
    b_hh: &[F],
    gates: &mut [F],
) {
    let in_dim = x.len();
    let hidden = h.len();
    let gd = 4 * hidden;
    debug_assert_eq!(w_ih.len(), gd * in_dim);
    debug_assert_eq!(w_hh.len(), gd * hidden);
    for j in 0..gd {
        let wi = &w_ih[j * in_dim..(j + 1) * in_dim];
        let wh = &w_hh[j * hidden..(j + 1) * hidden];
        let mut acc = b_ih[j] + b_hh[j];
        for kk in 0..in_dim {
            acc = acc + x[kk] * wi[kk];
        }
        for kk in 0..hidden {
            acc = acc + h[kk] * wh[kk];
        }
        gates[j] = acc;
    }
}

/// Sinusoidal positional encoding value for (position, channel).
pub fn pos_enc<F: Scalar>(pos: usize, ch: usize, dim: usize) -> F {
    let half = ch / 2;
    let rate = 10_000f64.powf(-2.0 * half as f64 / dim as f64);
    let angle = pos as f64 * rate;
    if ch.is_multiple_of(2) {
        fl(angle.sin())
    } else {
        fl(angle.cos())
    }
}

/// Numerically stable log(exp(a) + exp(b)); handles -inf operands.
#[inline]
pub fn logaddexp<F: Scalar>(a: F, b: F) -> F {
    if a == F::neg_infinity() {
        return b;
    }
    if b == F::neg_infinity() {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (F::one() + (lo - hi).exp()).ln()
}

/// In-place log-softmax over a full row.
pub fn log_softmax_row<F: Scalar>(row: &mut [F]) {
    let mut mx = row[0];
    for &v in row.iter() {
        if v > mx {
            mx = v;
        }
    }
    let mut sum = F::zero();
    for &v in row.iter() {
        sum = sum + (v - mx).exp();
    }
    let lse = mx + sum.ln();
    for v in row.iter_mut() {
        *v = *v - lse;
    }
}

//! Reverse-mode autodiff over a recorded tape.
//!
//! Every forward op computes eagerly through the shared kernels and records
//! enough state for its vector-Jacobian product. Composite layers (attention,
//! LSTM, the combine modules) are built from these primitives, so their
//! backward passes come from the chain rule instead of hand-written code.
//! The two fused ops with bespoke backwards (row softmax, layer norm) and the
//! transducer loss are covered by finite-difference checks in the test suite.
//!
//! All tape tensors are matrices (scalars are 1x1, vectors 1xN).

use crate::error::{CoreError, Result};
use crate::kernels;
use crate::scalar::{fl, Scalar};

/// Handle to a tensor recorded on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Tid(usize);

struct Buf<F> {
    data: Vec<F>,
    rows: usize,
    cols: usize,
}

enum Op<F: Scalar> {
    Leaf,
    Matmul { a: Tid, b: Tid },
    MatmulTB { a: Tid, b: Tid },
    Add { a: Tid, b: Tid },
    Mul { a: Tid, b: Tid },
    Scale { a: Tid, c: F },
    AddRowBcast { a: Tid, bias: Tid },
    Tanh { a: Tid },
    Sigmoid { a: Tid },
    SoftmaxRows { a: Tid, valid: Option<Vec<usize>> },
    LayerNormRows { a: Tid, gain: Tid, bias: Tid, xhat: Vec<F>, rstd: Vec<F> },
    ConcatCols { a: Tid, b: Tid },
    ConcatRows { parts: Vec<Tid> },
    SliceCols { a: Tid, start: usize, len: usize },
    SliceRows { a: Tid, start: usize, len: usize },
    GatherRows { table: Tid, idx: Vec<usize> },
    OuterAddRows { a: Tid, b: Tid },
    SumAll { a: Tid },
    MeanCeRows { a: Tid, targets: Vec<usize> },
    RnntLoss { logits: Tid, targets: Vec<usize>, t_len: usize, lp: Vec<F>, alpha: Vec<F>, log_z: F },
}

/// Wengert tape: forward ops append nodes; `backward` replays them in
/// reverse accumulating gradients.
pub struct Tape<F: Scalar> {
    bufs: Vec<Buf<F>>,
    ops: Vec<(Op<F>, Tid)>,
    grads: Vec<Option<Vec<F>>>,
    ran_backward: bool,
}

impl<F: Scalar> Default for Tape<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> Tape<F> {
    pub fn new() -> Self {
        Tape { bufs: Vec::new(), ops: Vec::new(), grads: Vec::new(), ran_backward: false }
    }

    fn push(&mut self, op: Op<F>, data: Vec<F>, rows: usize, cols: usize) -> Tid {
        debug_assert_eq!(data.len(), rows * cols);
        let id = Tid(self.bufs.len());
        self.bufs.push(Buf { data, rows, cols });
        self.grads.push(None);
        self.ops.push((op, id));
        id
    }

    pub fn data(&self, t: Tid) -> &[F] {
        &self.bufs[t.0].data
    }

    pub fn rows(&self, t: Tid) -> usize {
        self.bufs[t.0].rows
    }

    pub fn cols(&self, t: Tid) -> usize {
        self.bufs[t.0].cols
    }

    pub fn scalar_value(&self, t: Tid) -> F {
        debug_assert_eq!(self.bufs[t.0].data.len(), 1);
        self.bufs[t.0].data[0]
    }

    /// Gradient accumulated for `t` by the last `backward` call.
    pub fn grad(&self, t: Tid) -> Option<&[F]> {
        self.grads[t.0].as_deref()
    }

    // ── inputs ──────────────────────────────────────────────────────

    pub fn leaf(&mut self, rows: usize, cols: usize, data: Vec<F>) -> Tid {
        assert_eq!(data.len(), rows * cols, "leaf shape mismatch");
        self.push(Op::Leaf, data, rows, cols)
    }

    pub fn leaf_row(&mut self, data: Vec<F>) -> Tid {
        let c = data.len();
        self.leaf(1, c, data)
    }

    pub fn scalar_leaf(&mut self, v: F) -> Tid {
        self.leaf(1, 1, vec![v])
    }

    // ── arithmetic ──────────────────────────────────────────────────

    pub fn matmul(&mut self, a: Tid, b: Tid) -> Tid {
        let (m, k) = (self.rows(a), self.cols(a));
        let (k2, n) = (self.rows(b), self.cols(b));
        assert_eq!(k, k2, "matmul inner dims");
        let mut out = vec![F::zero(); m * n];
        kernels::matmul(self.data(a), self.data(b), &mut out, m, k, n);
        self.push(Op::Matmul { a, b }, out, m, n)
    }

    /// a[m,k] @ b[n,k]^T — the usual `x @ W^T` for weights stored [out, in].
    pub fn matmul_tb(&mut self, a: Tid, b: Tid) -> Tid {
        let (m, k) = (self.rows(a), self.cols(a));
        let (n, k2) = (self.rows(b), self.cols(b));
        assert_eq!(k, k2, "matmul_tb inner dims");
        let mut out = vec![F::zero(); m * n];
        kernels::matmul_tb(self.data(a), self.data(b), &mut out, m, k, n);
        self.push(Op::MatmulTB { a, b }, out, m, n)
    }

    pub fn add(&mut self, a: Tid, b: Tid) -> Tid {
        assert_eq!(self.rows(a), self.rows(b));
        assert_eq!(self.cols(a), self.cols(b));
        let out: Vec<F> =
            self.data(a).iter().zip(self.data(b)).map(|(&x, &y)| x + y).collect();
        let (r, c) = (self.rows(a), self.cols(a));
        self.push(Op::Add { a, b }, out, r, c)
    }

    pub fn mul(&mut self, a: Tid, b: Tid) -> Tid {
        assert_eq!(self.rows(a), self.rows(b));
        assert_eq!(self.cols(a), self.cols(b));
        let out: Vec<F> =
            self.data(a).iter().zip(self.data(b)).map(|(&x, &y)| x * y).collect();
        let (r, c) = (self.rows(a), self.cols(a));
        self.push(Op::Mul { a, b }, out, r, c)
    }

    pub fn scale(&mut self, a: Tid, c: F) -> Tid {
        let out: Vec<F> = self.data(a).iter().map(|&x| x * c).collect();
        let (r, cc) = (self.rows(a), self.cols(a));
        self.push(Op::Scale { a, c }, out, r, cc)
    }

    /// Adds a 1xN bias row to every row of `a`.
    pub fn add_row_bcast(&mut self, a: Tid, bias: Tid) -> Tid {
        let (m, n) = (self.rows(a), self.cols(a));
        assert_eq!(self.rows(bias), 1);
        assert_eq!(self.cols(bias), n);
        let mut out = self.data(a).to_vec();
        let b = self.data(bias).to_vec();
        for r in 0..m {
            for j in 0..n {
                out[r * n + j] = out[r * n + j] + b[j];
            }
        }
        self.push(Op::AddRowBcast { a, bias }, out, m, n)
    }

    /// x @ w^T (+ bias row). The workhorse for every projection layer.
    pub fn linear(&mut self, x: Tid, w: Tid, b: Option<Tid>) -> Tid {
        let y = self.matmul_tb(x, w);
        match b {
            Some(bias) => self.add_row_bcast(y, bias),
            None => y,
        }
    }

    pub fn tanh(&mut self, a: Tid) -> Tid {
        let out: Vec<F> = self.data(a).iter().map(|&x| x.tanh()).collect();
        let (r, c) = (self.rows(a), self.cols(a));
        self.push(Op::Tanh { a }, out, r, c)
    }

    pub fn sigmoid(&mut self, a: Tid) -> Tid {
        let out: Vec<F> = self.data(a).iter().map(|&x| kernels::sigmoid(x)).collect();
        let (r, c) = (self.rows(a), self.cols(a));
        self.push(Op::Sigmoid { a }, out, r, c)
    }

    /// Row-wise max-subtracted softmax. When `valid` is given, row r is
    /// normalized over its first `valid[r]` entries and zero beyond (used for
    /// causal attention masks).
    pub fn softmax_rows(&mut self, a: Tid, valid: Option<Vec<usize>>) -> Tid {
        let (m, n) = (self.rows(a), self.cols(a));
        if let Some(v) = &valid {
            assert_eq!(v.len(), m);
        }
        let mut out = self.data(a).to_vec();
        for r in 0..m {
            let vl = valid.as_ref().map_or(n, |v| v[r]);
            kernels::softmax_row(&mut out[r * n..(r + 1) * n], vl);
        }
        self.push(Op::SoftmaxRows { a, valid }, out, m, n)
    }

    /// Row-wise layer normalization with learned 1xN gain and bias.
    pub fn layer_norm(&mut self, a: Tid, gain: Tid, bias: Tid, eps: F) -> Tid {
        let (m, n) = (self.rows(a), self.cols(a));
        assert_eq!(self.cols(gain), n);
        assert_eq!(self.cols(bias), n);
        let mut out = vec![F::zero(); m * n];
        let mut xhat = vec![F::zero(); m * n];
        let mut rstds = vec![F::zero(); m];
        let x = self.data(a).to_vec();
        let g = self.data(gain).to_vec();
        let b = self.data(bias).to_vec();
        for r in 0..m {
            let row = &x[r * n..(r + 1) * n];
            let (mean, rstd) =
                kernels::layernorm_row(row, &g, &b, eps, &mut out[r * n..(r + 1) * n]);
            for j in 0..n {
                xhat[r * n + j] = (row[j] - mean) * rstd;
            }
            rstds[r] = rstd;
        }
        self.push(Op::LayerNormRows { a, gain, bias, xhat, rstd: rstds }, out, m, n)
    }

    pub fn concat_cols(&mut self, a: Tid, b: Tid) -> Tid {
        let (m, ca) = (self.rows(a), self.cols(a));
        let cb = self.cols(b);
        assert_eq!(self.rows(b), m);
        let mut out = Vec::with_capacity(m * (ca + cb));
        for r in 0..m {
            out.extend_from_slice(&self.data(a)[r * ca..(r + 1) * ca]);
            out.extend_from_slice(&self.data(b)[r * cb..(r + 1) * cb]);
        }
        self.push(Op::ConcatCols { a, b }, out, m, ca + cb)
    }

    pub fn concat_rows(&mut self, parts: &[Tid]) -> Tid {
        assert!(!parts.is_empty());
        let c = self.cols(parts[0]);
        let mut out = Vec::new();
        let mut rows = 0;
        for &p in parts {
            assert_eq!(self.cols(p), c);
            rows += self.rows(p);
            out.extend_from_slice(self.data(p));
        }
        self.push(Op::ConcatRows { parts: parts.to_vec() }, out, rows, c)
    }

    pub fn slice_cols(&mut self, a: Tid, start: usize, len: usize) -> Tid {
        let (m, n) = (self.rows(a), self.cols(a));
        assert!(start + len <= n);
        let mut out = Vec::with_capacity(m * len);
        for r in 0..m {
            out.extend_from_slice(&self.data(a)[r * n + start..r * n + start + len]);
        }
        self.push(Op::SliceCols { a, start, len }, out, m, len)
    }

    pub fn slice_rows(&mut self, a: Tid, start: usize, len: usize) -> Tid {
        let (m, n) = (self.rows(a), self.cols(a));
        assert!(start + len <= m);
        let out = self.data(a)[start * n..(start + len) * n].to_vec();
        self.push(Op::SliceRows { a, start, len }, out, len, n)
    }

    /// Row lookup (embedding gather). Backward scatter-adds into the table.
    pub fn gather_rows(&mut self, table: Tid, idx: Vec<usize>) -> Tid {
        let (m, n) = (self.rows(table), self.cols(table));
        let mut out = Vec::with_capacity(idx.len() * n);
        for &i in &idx {
            assert!(i < m, "gather index {} out of range {}", i, m);
            out.extend_from_slice(&self.data(table)[i * n..(i + 1) * n]);
        }
        let r = idx.len();
        self.push(Op::GatherRows { table, idx }, out, r, n)
    }

    /// All-pairs row sums: out[i*q + j] = a[i] + b[j]. Used by the joint
    /// network to combine every encoder frame with every predictor step.
    pub fn outer_add_rows(&mut self, a: Tid, b: Tid) -> Tid {
        let (p, n) = (self.rows(a), self.cols(a));
        let (q, n2) = (self.rows(b), self.cols(b));
        assert_eq!(n, n2);
        let mut out = Vec::with_capacity(p * q * n);
        for i in 0..p {
            let ar = &self.data(a)[i * n..(i + 1) * n];
            for j in 0..q {
                let br = &self.data(b)[j * n..(j + 1) * n];
                for k in 0..n {
                    out.push(ar[k] + br[k]);
                }
            }
        }
        self.push(Op::OuterAddRows { a, b }, out, p * q, n)
    }

    pub fn sum_all(&mut self, a: Tid) -> Tid {
        let s = self.data(a).iter().copied().fold(F::zero(), |acc, v| acc + v);
        self.push(Op::SumAll { a }, vec![s], 1, 1)
    }

    /// Mean over rows of the cross-entropy between row logits and integer
    /// targets.
    pub fn mean_ce_rows(&mut self, a: Tid, targets: Vec<usize>) -> Tid {
        let (m, n) = (self.rows(a), self.cols(a));
        assert_eq!(targets.len(), m);
        assert!(m >= 1);
        let mut total = F::zero();
        let mut row = vec![F::zero(); n];
        for (r, &t) in targets.iter().enumerate() {
            assert!(t < n);
            row.copy_from_slice(&self.data(a)[r * n..(r + 1) * n]);
            kernels::log_softmax_row(&mut row);
            total = total - row[t];
        }
        let loss = total / fl::<F>(m as f64);
        self.push(Op::MeanCeRows { a, targets }, vec![loss], 1, 1)
    }

    /// Transducer negative log-likelihood over a full (T, U+1) lattice of
    /// joint logits. `logits` has T*(U+1) rows (row t*(U+1)+u) over V+1
    /// classes with blank at the last index. Log-domain forward DP; the
    /// backward pass uses backward variables, and is verified against finite
    /// differences in the tests.
    pub fn rnnt_loss(&mut self, logits: Tid, targets: Vec<usize>, t_len: usize) -> Tid {
        let (rows, v1) = (self.rows(logits), self.cols(logits));
        let u = targets.len();
        let u1 = u + 1;
        assert_eq!(rows, t_len * u1, "lattice rows must be T*(U+1)");
        let blank = v1 - 1;
        for &tgt in &targets {
            assert!(tgt < blank, "targets must not contain blank");
        }

        // Log-softmax every lattice row once; cached for the backward pass.
        let mut lp = self.data(logits).to_vec();
        for r in 0..rows {
            kernels::log_softmax_row(&mut lp[r * v1..(r + 1) * v1]);
        }

        let ninf = F::neg_infinity();
        let mut alpha = vec![ninf; t_len * u1];
        alpha[0] = F::zero();
        for t in 0..t_len {
            for uu in 0..u1 {
                if t == 0 && uu == 0 {
                    continue;
                }
                let mut acc = ninf;
                if t > 0 {
                    let prev = (t - 1) * u1 + uu;
                    acc = kernels::logaddexp(acc, alpha[prev] + lp[prev * v1 + blank]);
                }
                if uu > 0 {
                    let prev = t * u1 + (uu - 1);
                    acc = kernels::logaddexp(acc, alpha[prev] + lp[prev * v1 + targets[uu - 1]]);
                }
                alpha[t * u1 + uu] = acc;
            }
        }
        let last = (t_len - 1) * u1 + u;
        let log_z = alpha[last] + lp[last * v1 + blank];
        self.push(
            Op::RnntLoss { logits, targets, t_len, lp, alpha, log_z },
            vec![-log_z],
            1,
            1,
        )
    }

    // ── backward ────────────────────────────────────────────────────

    fn acc_grad(&mut self, t: Tid, g: &[F]) {
        match &mut self.grads[t.0] {
            Some(existing) => {
                for (e, &v) in existing.iter_mut().zip(g) {
                    *e = *e + v;
                }
            }
            None => self.grads[t.0] = Some(g.to_vec()),
        }
    }

    /// Runs the reverse pass from a scalar loss. Gradients accumulate into
    /// `grad(..)` slots for every tensor that influences the loss.
    pub fn backward(&mut self, loss: Tid) -> Result<()> {
        if self.ops.is_empty() {
            return Err(CoreError::BackwardWithoutForward);
        }
        if self.bufs[loss.0].data.len() != 1 {
            return Err(CoreError::InvalidArgument("backward expects a scalar loss".into()));
        }
        for g in self.grads.iter_mut() {
            *g = None;
        }
        self.grads[loss.0] = Some(vec![F::one()]);
        self.ran_backward = true;

        for i in (0..self.ops.len()).rev() {
            let out = self.ops[i].1;
            let Some(dout) = self.grads[out.0].clone() else { continue };
            // Split borrow: read op by index, mutate grads through helper.
            match &self.ops[i].0 {
                Op::Leaf => {}
                Op::Matmul { a, b } => {
                    let (a, b) = (*a, *b);
                    let (m, k) = (self.rows(a), self.cols(a));
                    let n = self.cols(b);
                    // dA = dOut @ B^T ; dB = A^T @ dOut
                    let mut da = vec![F::zero(); m * k];
                    kernels::matmul_tb(&dout, self.data(b), &mut da, m, n, k);
                    let mut db = vec![F::zero(); k * n];
                    {
                        let a_data = self.data(a);
                        for kk in 0..k {
                            for i2 in 0..m {
                                let av = a_data[i2 * k + kk];
                                if av == F::zero() {
                                    continue;
                                }
                                for j in 0..n {
                                    db[kk * n + j] = db[kk * n + j] + av * dout[i2 * n + j];
                                }
                            }
                        }
                    }
                    self.acc_grad(a, &da);
                    self.acc_grad(b, &db);
                }
                Op::MatmulTB { a, b } => {
                    let (a, b) = (*a, *b);
                    let (m, k) = (self.rows(a), self.cols(a));
                    let n = self.rows(b);
                    // out = A @ B^T : dA = dOut @ B ; dB = dOut^T @ A
                    let mut da = vec![F::zero(); m * k];
                    kernels::matmul(&dout, self.data(b), &mut da, m, n, k);
                    let mut db = vec![F::zero(); n * k];
                    {
                        let a_data = self.data(a);
                        for i2 in 0..m {
                            for j in 0..n {
                                let dv = dout[i2 * n + j];
                                if dv == F::zero() {
                                    continue;
                                }
                                for kk in 0..k {
                                    db[j * k + kk] = db[j * k + kk] + dv * a_data[i2 * k + kk];
                                }
                            }
                        }
                    }
                    self.acc_grad(a, &da);
                    self.acc_grad(b, &db);
                }
                Op::Add { a, b } => {
                    let (a, b) = (*a, *b);
                    self.acc_grad(a, &dout);
                    self.acc_grad(b, &dout);
                }
                Op::Mul { a, b } => {
                    let (a, b) = (*a, *b);
                    let da: Vec<F> =
                        dout.iter().zip(self.data(b)).map(|(&d, &v)| d * v).collect();
                    let db: Vec<F> =
                        dout.iter().zip(self.data(a)).map(|(&d, &v)| d * v).collect();
                    self.acc_grad(a, &da);
                    self.acc_grad(b, &db);
                }
                Op::Scale { a, c } => {
                    let (a, c) = (*a, *c);
                    let da: Vec<F> = dout.iter().map(|&d| d * c).collect();
                    self.acc_grad(a, &da);
                }
                Op::AddRowBcast { a, bias } => {
                    let (a, bias) = (*a, *bias);
                    let (m, n) = (self.rows(a), self.cols(a));
                    let mut dbias = vec![F::zero(); n];
                    for r in 0..m {
                        for j in 0..n {
                            dbias[j] = dbias[j] + dout[r * n + j];
                        }
                    }
                    self.acc_grad(a, &dout);
                    self.acc_grad(bias, &dbias);
                }
                Op::Tanh { a } => {
                    let a = *a;
                    let y = &self.bufs[out.0].data;
                    let da: Vec<F> =
                        dout.iter().zip(y).map(|(&d, &yv)| d * (F::one() - yv * yv)).collect();
                    self.acc_grad(a, &da);
                }
                Op::Sigmoid { a } => {
                    let a = *a;
                    let y = &self.bufs[out.0].data;
                    let da: Vec<F> =
                        dout.iter().zip(y).map(|(&d, &yv)| d * yv * (F::one() - yv)).collect();
                    self.acc_grad(a, &da);
                }
                Op::SoftmaxRows { a, valid } => {
                    let a = *a;
                    let valid = valid.clone();
                    let (m, n) = (self.rows(a), self.cols(a));
                    let y = self.bufs[out.0].data.clone();
                    let mut da = vec![F::zero(); m * n];
                    for r in 0..m {
                        let vl = valid.as_ref().map_or(n, |v| v[r]);
                        let mut dot = F::zero();
                        for j in 0..vl {
                            dot = dot + dout[r * n + j] * y[r * n + j];
                        }
                        for j in 0..vl {
                            da[r * n + j] = y[r * n + j] * (dout[r * n + j] - dot);
                        }
                    }
                    self.acc_grad(a, &da);
                }
                Op::LayerNormRows { a, gain, bias, xhat, rstd } => {
                    let (a, gain, bias) = (*a, *gain, *bias);
                    let xhat = xhat.clone();
                    let rstd = rstd.clone();
                    let (m, n) = (self.rows(a), self.cols(a));
                    let nf = fl::<F>(n as f64);
                    let g = self.data(gain).to_vec();
                    let mut da = vec![F::zero(); m * n];
                    let mut dgain = vec![F::zero(); n];
                    let mut dbias = vec![F::zero(); n];
                    for r in 0..m {
                        let o = r * n;
                        let mut mean_dxhat = F::zero();
                        let mut mean_dxhat_xhat = F::zero();
                        for j in 0..n {
                            let dy = dout[o + j];
                            dgain[j] = dgain[j] + dy * xhat[o + j];
                            dbias[j] = dbias[j] + dy;
                            let dxh = dy * g[j];
                            mean_dxhat = mean_dxhat + dxh;
                            mean_dxhat_xhat = mean_dxhat_xhat + dxh * xhat[o + j];
                        }
                        mean_dxhat = mean_dxhat / nf;
                        mean_dxhat_xhat = mean_dxhat_xhat / nf;
                        for j in 0..n {
                            let dxh = dout[o + j] * g[j];
                            da[o + j] =
                                rstd[r] * (dxh - mean_dxhat - xhat[o + j] * mean_dxhat_xhat);
                        }
                    }
                    self.acc_grad(a, &da);
                    self.acc_grad(gain, &dgain);
                    self.acc_grad(bias, &dbias);
                }
                Op::ConcatCols { a, b } => {
                    let (a, b) = (*a, *b);
                    let (m, ca) = (self.rows(a), self.cols(a));
                    let cb = self.cols(b);
                    let n = ca + cb;
                    let mut da = vec![F::zero(); m * ca];
                    let mut db = vec![F::zero(); m * cb];
                    for r in 0..m {
                        da[r * ca..(r + 1) * ca].copy_from_slice(&dout[r * n..r * n + ca]);
                        db[r * cb..(r + 1) * cb].copy_from_slice(&dout[r * n + ca..(r + 1) * n]);
                    }
                    self.acc_grad(a, &da);
                    self.acc_grad(b, &db);
                }
                Op::ConcatRows { parts } => {
                    let parts = parts.clone();
                    let c = self.cols(out);
                    let mut off = 0;
                    for p in parts {
                        let pr = self.rows(p);
                        let dp = dout[off..off + pr * c].to_vec();
                        self.acc_grad(p, &dp);
                        off += pr * c;
                    }
                }
                Op::SliceCols { a, start, len } => {
                    let (a, start, len) = (*a, *start, *len);
                    let (m, n) = (self.rows(a), self.cols(a));
                    let mut da = vec![F::zero(); m * n];
                    for r in 0..m {
                        da[r * n + start..r * n + start + len]
                            .copy_from_slice(&dout[r * len..(r + 1) * len]);
                    }
                    self.acc_grad(a, &da);
                }
                Op::SliceRows { a, start, len } => {
                    let (a, start, len) = (*a, *start, *len);
                    let (m, n) = (self.rows(a), self.cols(a));
                    let mut da = vec![F::zero(); m * n];
                    da[start * n..(start + len) * n].copy_from_slice(&dout);
                    self.acc_grad(a, &da);
                }
                Op::GatherRows { table, idx } => {
                    let table = *table;
                    let idx = idx.clone();
                    let (m, n) = (self.rows(table), self.cols(table));
                    let mut dt = vec![F::zero(); m * n];
                    for (r, &i2) in idx.iter().enumerate() {
                        for j in 0..n {
                            dt[i2 * n + j] = dt[i2 * n + j] + dout[r * n + j];
                        }
                    }
                    self.acc_grad(table, &dt);
                }
                Op::OuterAddRows { a, b } => {
                    let (a, b) = (*a, *b);
                    let (p, n) = (self.rows(a), self.cols(a));
                    let q = self.rows(b);
                    let mut da = vec![F::zero(); p * n];
                    let mut db = vec![F::zero(); q * n];
                    for i2 in 0..p {
                        for j in 0..q {
                            let o = (i2 * q + j) * n;
                            for k in 0..n {
                                da[i2 * n + k] = da[i2 * n + k] + dout[o + k];
                                db[j * n + k] = db[j * n + k] + dout[o + k];
                            }
                        }
                    }
                    self.acc_grad(a, &da);
                    self.acc_grad(b, &db);
                }
                Op::SumAll { a } => {
                    let a = *a;
                    let numel = self.bufs[a.0].data.len();
                    let da = vec![dout[0]; numel];
                    self.acc_grad(a, &da);
                }
                Op::MeanCeRows { a, targets } => {
                    let a = *a;
                    let targets = targets.clone();
                    let (m, n) = (self.rows(a), self.cols(a));
                    let scale = dout[0] / fl::<F>(m as f64);
                    let mut da = vec![F::zero(); m * n];
                    let mut row = vec![F::zero(); n];
                    for (r, &t) in targets.iter().enumerate() {
                        row.copy_from_slice(&self.data(a)[r * n..(r + 1) * n]);
                        kernels::log_softmax_row(&mut row);
                        for j in 0..n {
                            let p = row[j].exp();
                            let onehot = if j == t { F::one() } else { F::zero() };
                            da[r * n + j] = (p - onehot) * scale;
                        }
                    }
                    self.acc_grad(a, &da);
                }
                Op::RnntLoss { logits, targets, t_len, lp, alpha, log_z } => {
                    let logits = *logits;
                    let targets = targets.clone();
                    let t_len = *t_len;
                    let lp = lp.clone();
                    let alpha = alpha.clone();
                    let log_z = *log_z;
                    let v1 = self.cols(logits);
                    let blank = v1 - 1;
                    let u = targets.len();
                    let u1 = u + 1;
                    let ninf = F::neg_infinity();

                    // Backward variables: beta[t][u] = log prob of completing
                    // the alignment from node (t,u), final blank included.
                    let mut beta = vec![ninf; t_len * u1];
                    beta[(t_len - 1) * u1 + u] = lp[((t_len - 1) * u1 + u) * v1 + blank];
                    for t in (0..t_len).rev() {
                        for uu in (0..u1).rev() {
                            if t == t_len - 1 && uu == u {
                                continue;
                            }
                            let node = t * u1 + uu;
                            let mut acc = ninf;
                            if t + 1 < t_len {
                                acc = kernels::logaddexp(
                                    acc,
                                    lp[node * v1 + blank] + beta[(t + 1) * u1 + uu],
                                );
                            }
                            if uu < u {
                                acc = kernels::logaddexp(
                                    acc,
                                    lp[node * v1 + targets[uu]] + beta[node + 1],
                                );
                            }
                            beta[node] = acc;
                        }
                    }

                    // d(-logZ)/d lp(transition) = -posterior(transition);
                    // chain through the row log-softmax.
                    let seed = dout[0];
                    let mut dz = vec![F::zero(); t_len * u1 * v1];
                    for t in 0..t_len {
                        for uu in 0..u1 {
                            let node = t * u1 + uu;
                            if alpha[node] == ninf {
                                continue;
                            }
                            let mut g = vec![F::zero(); v1];
                            // blank transition
                            let beta_next = if t + 1 < t_len {
                                beta[(t + 1) * u1 + uu]
                            } else if uu == u {
                                F::zero()
                            } else {
                                ninf
                            };
                            if beta_next > ninf {
                                g[blank] = -(alpha[node] + lp[node * v1 + blank] + beta_next
                                    - log_z)
                                    .exp();
                            }
                            // label transition
                            if uu < u && beta[node + 1] > ninf {
                                let y = targets[uu];
                                g[y] = g[y]
                                    - (alpha[node] + lp[node * v1 + y] + beta[node + 1] - log_z)
                                        .exp();
                            }
                            let gsum = g.iter().copied().fold(F::zero(), |a2, v| a2 + v);
                            for j in 0..v1 {
                                let p = lp[node * v1 + j].exp();
                                dz[node * v1 + j] = seed * (g[j] - p * gsum);
                            }
                        }
                    }
                    self.acc_grad(logits, &dz);
                }
            }
        }
        Ok(())
    }
}

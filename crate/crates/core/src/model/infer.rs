//! Frozen-model streaming inference.
//!
//! Mirrors the tape graphs through the same kernels, but with per-row
//! computation and append-only key/value caches so that consuming frame t
//! never touches frames beyond t.

use crate::error::{CoreError, Result};
use crate::kernels;
use crate::model::context::ContextEmbeddings;
use crate::model::{EdActivation, Model};
use crate::ops::{lstm_step, LstmParams, LstmState, LAYERNORM_EPS};
use crate::scalar::{fl, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BiasSide {
    Enc,
    Pred,
}

impl BiasSide {
    fn prefix(&self) -> &'static str {
        match self {
            BiasSide::Enc => "bias.enc",
            BiasSide::Pred => "bias.pred",
        }
    }
}

fn ln_row<F: Scalar>(m: &Model<F>, prefix: &str, x: &[F]) -> Vec<F> {
    let g = m.params.value(&format!("{prefix}.g"));
    let b = m.params.value(&format!("{prefix}.b"));
    let mut out = vec![F::zero(); x.len()];
    kernels::layernorm_row(x, g.data(), b.data(), fl(LAYERNORM_EPS), &mut out);
    out
}

fn proj_row<F: Scalar>(m: &Model<F>, x: &[F], w: &str, b: &str, out_dim: usize) -> Vec<F> {
    let mut out = vec![F::zero(); out_dim];
    kernels::linear_row(x, m.params.value(w).data(), Some(m.params.value(b).data()), &mut out);
    out
}

/// Multi-head attention of one projected query row over cached projected
/// keys/values (n rows of width d).
fn attend_cached<F: Scalar>(q: &[F], k: &[F], v: &[F], n: usize, heads: usize) -> Vec<F> {
    let d = q.len();
    let hd = d / heads;
    let scale = fl::<F>(1.0 / (hd as f64).sqrt());
    let mut out = vec![F::zero(); d];
    let mut scores = vec![F::zero(); n];
    for h in 0..heads {
        let off = h * hd;
        for j in 0..n {
            let mut dot = F::zero();
            for dd in 0..hd {
                dot = dot + q[off + dd] * k[j * d + off + dd];
            }
            scores[j] = dot * scale;
        }
        kernels::softmax_row(&mut scores, n);
        for dd in 0..hd {
            let mut acc = F::zero();
            for (j, &s) in scores.iter().enumerate() {
                acc = acc + s * v[j * d + off + dd];
            }
            out[off + dd] = acc;
        }
    }
    out
}

// ── biasing layers ──────────────────────────────────────────────────

/// Projected keys/values of a context matrix for one biasing side. Built
/// once per (utterance, list); reused for every query row.
#[derive(Debug, Clone)]
pub struct BiasCache<F: Scalar> {
    pub k: Vec<F>,
    pub v: Vec<F>,
    pub n: usize,
    side: BiasSide,
}

impl<F: Scalar> BiasCache<F> {
    pub fn new(m: &Model<F>, side: BiasSide, ctx: &ContextEmbeddings<F>) -> Self {
        let d = m.cfg.model_dim;
        let pre = side.prefix();
        let n = ctx.mat.rows();
        let mut k = vec![F::zero(); n * d];
        let mut v = vec![F::zero(); n * d];
        let wk = m.params.value(&format!("{pre}.attn.wk"));
        let bk = m.params.value(&format!("{pre}.attn.bk"));
        let wv = m.params.value(&format!("{pre}.attn.wv"));
        let bv = m.params.value(&format!("{pre}.attn.bv"));
        for r in 0..n {
            kernels::linear_row(
                ctx.mat.row(r),
                wk.data(),
                Some(bk.data()),
                &mut k[r * d..(r + 1) * d],
            );
            kernels::linear_row(
                ctx.mat.row(r),
                wv.data(),
                Some(bv.data()),
                &mut v[r * d..(r + 1) * d],
            );
        }
        BiasCache { k, v, n, side }
    }
}

/// Attention of one query row over the bias cache (the biased embedding).
pub fn bias_attend<F: Scalar>(m: &Model<F>, query: &[F], cache: &BiasCache<F>) -> Vec<F> {
    let d = m.cfg.model_dim;
    let pre = cache.side.prefix();
    let q = proj_row(m, query, &format!("{pre}.attn.wq"), &format!("{pre}.attn.bq"), d);
    let ctx = attend_cached(&q, &cache.k, &cache.v, cache.n, m.cfg.num_heads);
    proj_row(m, &ctx, &format!("{pre}.attn.wo"), &format!("{pre}.attn.bo"), d)
}

/// Combine module for one row.
pub fn combine_row<F: Scalar>(m: &Model<F>, side: BiasSide, biased: &[F], raw: &[F]) -> Vec<F> {
    let pre = side.prefix();
    let lb = ln_row(m, &format!("{pre}.ln_b"), biased);
    let lq = ln_row(m, &format!("{pre}.ln_q"), raw);
    let mut cat = lb;
    cat.extend_from_slice(&lq);
    proj_row(m, &cat, &format!("{pre}.cmb.w"), &format!("{pre}.cmb.b"), m.cfg.model_dim)
}

// ── audio encoder ───────────────────────────────────────────────────

struct BlockCache<F> {
    k: Vec<F>,
    v: Vec<F>,
}

/// Streaming causal encoder: push one frame, get one output row. Frame t's
/// row reads only cached state from frames <= t, so prefix invariance is
/// structural.
pub struct EncoderStream<'m, F: Scalar> {
    m: &'m Model<F>,
    blocks: Vec<BlockCache<F>>,
    t: usize,
}

impl<'m, F: Scalar> EncoderStream<'m, F> {
    pub fn new(m: &'m Model<F>) -> Self {
        let blocks =
            (0..m.cfg.enc_blocks).map(|_| BlockCache { k: Vec::new(), v: Vec::new() }).collect();
        EncoderStream { m, blocks, t: 0 }
    }

    pub fn frames_seen(&self) -> usize {
        self.t
    }

    pub fn push(&mut self, frame: &[F]) -> Result<Vec<F>> {
        let m = self.m;
        let d = m.cfg.model_dim;
        if frame.len() != m.cfg.feat_dim {
            return Err(CoreError::Shape(format!(
                "frame has {} features, model expects {}",
                frame.len(),
                m.cfg.feat_dim
            )));
        }
        let mut x = proj_row(m, frame, "enc.in.w", "enc.in.b", d);
        if m.cfg.pos_enc {
            for ch in 0..d {
                x[ch] = x[ch] + kernels::pos_enc(self.t, ch, d);
            }
        }
        let heads = m.cfg.num_heads;
        for b in 0..m.cfg.enc_blocks {
            let pre = format!("enc.blk{b}");
            let ln1 = ln_row(m, &format!("{pre}.ln1"), &x);
            let q = proj_row(m, &ln1, &format!("{pre}.attn.wq"), &format!("{pre}.attn.bq"), d);
            let k = proj_row(m, &ln1, &format!("{pre}.attn.wk"), &format!("{pre}.attn.bk"), d);
            let v = proj_row(m, &ln1, &format!("{pre}.attn.wv"), &format!("{pre}.attn.bv"), d);
            let cache = &mut self.blocks[b];
            cache.k.extend_from_slice(&k);
            cache.v.extend_from_slice(&v);
            let n = self.t + 1;
            let ctx = attend_cached(&q, &cache.k, &cache.v, n, heads);
            let attn_out =
                proj_row(m, &ctx, &format!("{pre}.attn.wo"), &format!("{pre}.attn.bo"), d);
            for i in 0..d {
                x[i] = x[i] + attn_out[i];
            }
            let ln2 = ln_row(m, &format!("{pre}.ln2"), &x);
            let mut f1 =
                proj_row(m, &ln2, &format!("{pre}.ff.w1"), &format!("{pre}.ff.b1"), m.cfg.enc_ff_dim);
            for val in f1.iter_mut() {
                *val = val.tanh();
            }
            let f2 = proj_row(m, &f1, &format!("{pre}.ff.w2"), &format!("{pre}.ff.b2"), d);
            for i in 0..d {
                x[i] = x[i] + f2[i];
            }
        }
        self.t += 1;
        Ok(ln_row(m, "enc.lnf", &x))
    }
}

/// Convenience: run the stream over a whole feature matrix.
pub fn encode_audio<F: Scalar>(m: &Model<F>, frames: &crate::tensor::Tensor<F>) -> Result<Vec<Vec<F>>> {
    if frames.rows() == 0 {
        return Err(CoreError::InvalidArgument("empty frame sequence".into()));
    }
    let mut stream = EncoderStream::new(m);
    let mut out = Vec::with_capacity(frames.rows());
    for t in 0..frames.rows() {
        out.push(stream.push(frames.row(t))?);
    }
    Ok(out)
}

// ── prediction network ──────────────────────────────────────────────

/// Streaming predictor over emitted non-blank tokens.
pub struct PredictorStream<'m, F: Scalar> {
    m: &'m Model<F>,
    states: Vec<LstmState<F>>,
    last_out: Vec<F>,
}

impl<'m, F: Scalar> PredictorStream<'m, F> {
    /// Fresh state; `step_start` must be called before the first joint.
    pub fn new(m: &'m Model<F>) -> Self {
        let d = m.cfg.model_dim;
        PredictorStream {
            m,
            states: (0..m.cfg.pred_layers).map(|_| LstmState::zeros(d)).collect(),
            last_out: vec![F::zero(); d],
        }
    }

    pub fn step_start(&mut self) -> Result<Vec<F>> {
        self.advance(self.m.cfg.sos())
    }

    /// Consumes one emitted token. Feeding blank is a caller bug.
    pub fn step_token(&mut self, token: usize) -> Result<Vec<F>> {
        if token == self.m.cfg.blank() {
            return Err(CoreError::InvalidArgument(
                "blank must not be fed to the prediction network".into(),
            ));
        }
        if token >= self.m.cfg.vocab {
            return Err(CoreError::TokenOutOfRange { id: token, vocab: self.m.cfg.vocab });
        }
        self.advance(token)
    }

    fn advance(&mut self, row: usize) -> Result<Vec<F>> {
        let m = self.m;
        let d = m.cfg.model_dim;
        let table = m.params.value("pred.embed");
        let mut x = table.data()[row * d..(row + 1) * d].to_vec();
        for l in 0..m.cfg.pred_layers {
            let p = LstmParams {
                w_ih: m.params.value(&format!("pred.l{l}.w_ih")).data(),
                b_ih: m.params.value(&format!("pred.l{l}.b_ih")).data(),
                w_hh: m.params.value(&format!("pred.l{l}.w_hh")).data(),
                b_hh: m.params.value(&format!("pred.l{l}.b_hh")).data(),
            };
            let new = lstm_step(&x, &self.states[l], &p)?;
            x = new.h.clone();
            self.states[l] = new;
        }
        self.last_out = x.clone();
        Ok(x)
    }

    pub fn last_out(&self) -> &[F] {
        &self.last_out
    }

    pub fn state(&self) -> &[LstmState<F>] {
        &self.states
    }
}

// ── joint network ───────────────────────────────────────────────────

/// Pre-activation of the joint hidden layer (additive in the two inputs).
pub fn joint_preactivation<F: Scalar>(m: &Model<F>, e_row: &[F], p_row: &[F]) -> Vec<F> {
    let hj = m.cfg.joint_hidden;
    let mut he = vec![F::zero(); hj];
    kernels::linear_row(e_row, m.params.value("joint.we").data(), None, &mut he);
    let mut hp = vec![F::zero(); hj];
    kernels::linear_row(
        p_row,
        m.params.value("joint.wp").data(),
        Some(m.params.value("joint.b").data()),
        &mut hp,
    );
    for i in 0..hj {
        he[i] = he[i] + hp[i];
    }
    he
}

/// Output logits over vocab + blank for one (frame, token-state) pair.
pub fn joint_logits<F: Scalar>(m: &Model<F>, e_row: &[F], p_row: &[F]) -> Vec<F> {
    let mut h = joint_preactivation(m, e_row, p_row);
    for v in h.iter_mut() {
        *v = v.tanh();
    }
    proj_row(m, &h, "joint.out.w", "joint.out.b", m.cfg.vocab + 1)
}

// ── entity detector ─────────────────────────────────────────────────

fn ed_act<F: Scalar>(m: &Model<F>, row: &mut [F]) {
    if m.cfg.ed_activation == EdActivation::Sigmoid {
        for v in row.iter_mut() {
            *v = kernels::sigmoid(*v);
        }
    }
}

/// Projected detector keys/values. For the predictor-based detector they
/// come from the context matrix (fixed per utterance); for the
/// encoder-predictor detector they grow with each biased encoder row.
#[derive(Debug, Clone)]
pub struct DetectorKeys<F: Scalar> {
    pub k: Vec<F>,
    pub v: Vec<F>,
    pub n: usize,
}

impl<F: Scalar> DetectorKeys<F> {
    pub fn empty() -> Self {
        DetectorKeys { k: Vec::new(), v: Vec::new(), n: 0 }
    }

    pub fn from_context(m: &Model<F>, ctx: &ContextEmbeddings<F>) -> Self {
        let mut s = Self::empty();
        for r in 0..ctx.mat.rows() {
            s.push(m, ctx.mat.row(r));
        }
        s
    }

    pub fn push(&mut self, m: &Model<F>, row: &[F]) {
        let d = m.cfg.model_dim;
        let mut k = proj_row(m, row, "det.wk", "det.bk", d);
        let mut v = proj_row(m, row, "det.wv", "det.bv", d);
        ed_act(m, &mut k);
        ed_act(m, &mut v);
        self.k.extend_from_slice(&k);
        self.v.extend_from_slice(&v);
        self.n += 1;
    }
}

/// Two-class detector logits for one query row over the given keys.
pub fn detector_logits_row<F: Scalar>(
    m: &Model<F>,
    keys: &DetectorKeys<F>,
    query: &[F],
) -> Result<[F; 2]> {
    if keys.n == 0 {
        return Err(CoreError::InvalidArgument("detector needs at least one key row".into()));
    }
    let d = m.cfg.model_dim;
    let mut q = proj_row(m, query, "det.wq", "det.bq", d);
    ed_act(m, &mut q);
    let h_ed = attend_cached(&q, &keys.k, &keys.v, keys.n, m.cfg.num_heads);
    let out = proj_row(m, &h_ed, "det.cls.w", "det.cls.b", 2);
    Ok([out[0], out[1]])
}

/// Hard gate from detector logits; ties resolve to biasing on.
pub fn ed_decide<F: Scalar>(logits: [F; 2]) -> bool {
    logits[1] >= logits[0]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::context::encode_context;
    use crate::model::{DetectorKind, ModelConfig};
    use crate::tensor::Tensor;

    fn tiny_model(detector: DetectorKind) -> Model<f64> {
        let cfg = ModelConfig {
            model_dim: 8,
            num_heads: 2,
            ctx_hidden: 4,
            vocab: 10,
            enc_blocks: 2,
            enc_ff_dim: 12,
            joint_hidden: 8,
            feat_dim: 3,
            detector,
            ..Default::default()
        };
        Model::init(cfg, 7).unwrap()
    }

    #[test]
    fn encoder_prefix_rows_are_invariant_to_future_frames() {
        let m = tiny_model(DetectorKind::None);
        let full: Vec<f64> = (0..5 * 3).map(|i| (i as f64 * 0.17).sin()).collect();
        let frames = Tensor::matrix(5, 3, full.clone()).unwrap();
        let rows_full = encode_audio(&m, &frames).unwrap();

        let prefix = Tensor::matrix(3, 3, full[..9].to_vec()).unwrap();
        let rows_prefix = encode_audio(&m, &prefix).unwrap();
        for t in 0..3 {
            assert_eq!(rows_full[t], rows_prefix[t], "row {t} differs");
        }
    }

    #[test]
    fn encoder_single_frame_gives_single_row() {
        let m = tiny_model(DetectorKind::None);
        let frames = Tensor::matrix(1, 3, vec![0.1, -0.2, 0.3]).unwrap();
        assert_eq!(encode_audio(&m, &frames).unwrap().len(), 1);
    }

    #[test]
    fn encoder_rejects_wrong_feature_dim() {
        let m = tiny_model(DetectorKind::None);
        let mut s = EncoderStream::new(&m);
        assert!(s.push(&[0.0; 5]).is_err());
    }

    #[test]
    fn predictor_rejects_blank() {
        let m = tiny_model(DetectorKind::None);
        let mut p = PredictorStream::new(&m);
        p.step_start().unwrap();
        assert!(p.step_token(m.cfg.blank()).is_err());
    }

    #[test]
    fn predictor_steps_thread_state() {
        let m = tiny_model(DetectorKind::None);
        let mut a = PredictorStream::new(&m);
        a.step_start().unwrap();
        a.step_token(1).unwrap();
        let out_a = a.step_token(2).unwrap();

        let mut b = PredictorStream::new(&m);
        b.step_start().unwrap();
        b.step_token(1).unwrap();
        let out_b = b.step_token(2).unwrap();
        assert_eq!(out_a, out_b);
    }

    #[test]
    fn joint_zero_weights_give_uniform_distribution() {
        let mut m = tiny_model(DetectorKind::None);
        let v1 = m.cfg.vocab + 1;
        let hj = m.cfg.joint_hidden;
        let zero_w = Tensor::matrix(v1, hj, vec![0.0; v1 * hj]).unwrap();
        // Overwrite the output projection with zeros.
        let mut p = crate::params::ParamStore::new(0);
        for (name, param) in m.params.iter() {
            if name == "joint.out.w" {
                p.insert(name, zero_w.clone());
            } else {
                p.insert(name, param.value.clone());
            }
        }
        m.params = p;
        let e = vec![0.3; m.cfg.model_dim];
        let pr = vec![-0.2; m.cfg.model_dim];
        let logits = joint_logits(&m, &e, &pr);
        for l in &logits {
            assert_eq!(*l, logits[0]);
        }
        let sm = crate::ops::softmax(&Tensor::from_vec(logits), 0).unwrap();
        for p in sm.data() {
            assert!((p - 1.0 / v1 as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn joint_preactivation_is_additive_in_encoder_input() {
        // The difference of pre-activations for two encoder rows must not
        // depend on the predictor row.
        let m = tiny_model(DetectorKind::None);
        let e1 = vec![0.25; m.cfg.model_dim];
        let e2: Vec<f64> = (0..m.cfg.model_dim).map(|i| (i as f64 * 0.3).cos()).collect();
        let p1 = vec![0.1; m.cfg.model_dim];
        let p2: Vec<f64> = (0..m.cfg.model_dim).map(|i| (i as f64 * 0.7).sin()).collect();
        let d11 = joint_preactivation(&m, &e1, &p1);
        let d21 = joint_preactivation(&m, &e2, &p1);
        let d12 = joint_preactivation(&m, &e1, &p2);
        let d22 = joint_preactivation(&m, &e2, &p2);
        for i in 0..m.cfg.joint_hidden {
            let a = d11[i] - d21[i];
            let b = d12[i] - d22[i];
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn bias_attention_singleton_weight_is_one() {
        // With only the no-bias row, the biased embedding equals the output
        // projection of that row's value for any query.
        let m = tiny_model(DetectorKind::None);
        let ce = encode_context(&m, &[]).unwrap();
        let cache = BiasCache::new(&m, BiasSide::Enc, &ce);
        let q1 = vec![5.0; m.cfg.model_dim];
        let q2: Vec<f64> = (0..m.cfg.model_dim).map(|i| -(i as f64)).collect();
        let b1 = bias_attend(&m, &q1, &cache);
        let b2 = bias_attend(&m, &q2, &cache);
        assert_eq!(b1, b2);
    }

    #[test]
    fn detector_singleton_rows_give_constant_logits() {
        let m = tiny_model(DetectorKind::Predictor);
        let ce = encode_context(&m, &[]).unwrap();
        let keys = DetectorKeys::from_context(&m, &ce);
        let q1 = vec![0.5; m.cfg.model_dim];
        let q2: Vec<f64> = (0..m.cfg.model_dim).map(|i| (i as f64).sin()).collect();
        let l1 = detector_logits_row(&m, &keys, &q1).unwrap();
        let l2 = detector_logits_row(&m, &keys, &q2).unwrap();
        assert_eq!(l1, l2);
    }

    #[test]
    fn detector_duplicate_key_rows_match_single_row() {
        // Two identical key rows split the weight evenly; the convex sum is
        // the single-row output.
        let m = tiny_model(DetectorKind::Predictor);
        let row: Vec<f64> = (0..m.cfg.model_dim).map(|i| (i as f64 * 0.21).cos()).collect();
        let mut one = DetectorKeys::empty();
        one.push(&m, &row);
        let mut two = DetectorKeys::empty();
        two.push(&m, &row);
        two.push(&m, &row);
        let q: Vec<f64> = (0..m.cfg.model_dim).map(|i| (i as f64 * 0.13).sin()).collect();
        let a = detector_logits_row(&m, &one, &q).unwrap();
        let b = detector_logits_row(&m, &two, &q).unwrap();
        assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
    }

    #[test]
    fn detector_zero_keys_is_an_error() {
        let m = tiny_model(DetectorKind::EncoderPredictor);
        let keys = DetectorKeys::empty();
        let q = vec![0.0; m.cfg.model_dim];
        assert!(detector_logits_row(&m, &keys, &q).is_err());
    }

    #[test]
    fn ed_decide_rules() {
        assert!(ed_decide([0.2f64, 0.9]));
        assert!(!ed_decide([0.9f64, 0.2]));
        assert!(ed_decide([0.5f64, 0.5]), "ties must bias on");
    }
}

//! Tape-side forward graphs for training.

use crate::kernels;
use crate::model::{DetectorKind, EdActivation, Model, ModelConfig};
use crate::params::ParamStore;
use crate::scalar::{fl, Scalar};
use crate::tape::{Tape, Tid};
use std::collections::HashMap;

/// A training graph under construction: a tape plus the set of parameters
/// bound onto it. After `backward`, `take_grads` hands the per-parameter
/// gradients back for accumulation into the store.
pub struct Graph<'a, F: Scalar> {
    pub tape: Tape<F>,
    store: &'a ParamStore<F>,
    pub cfg: &'a ModelConfig,
    bound: HashMap<String, Tid>,
}

impl<'a, F: Scalar> Graph<'a, F> {
    pub fn new(model: &'a Model<F>) -> Self {
        Graph {
            tape: Tape::new(),
            store: &model.params,
            cfg: &model.cfg,
            bound: HashMap::new(),
        }
    }

    /// Binds a named parameter onto the tape (once).
    pub fn p(&mut self, name: &str) -> Tid {
        if let Some(&t) = self.bound.get(name) {
            return t;
        }
        let v = self.store.value(name);
        let t = self.tape.leaf(v.rows(), v.cols(), v.data().to_vec());
        self.bound.insert(name.to_string(), t);
        t
    }

    /// Gradients of every bound parameter after `tape.backward`.
    pub fn take_grads(&self) -> Vec<(String, Vec<F>)> {
        let mut out = Vec::with_capacity(self.bound.len());
        for (name, &tid) in &self.bound {
            if let Some(g) = self.tape.grad(tid) {
                out.push((name.clone(), g.to_vec()));
            }
        }
        out
    }

    // ── layer helpers ───────────────────────────────────────────────

    pub fn linear_p(&mut self, x: Tid, w: &str, b: Option<&str>) -> Tid {
        let wt = self.p(w);
        let bt = b.map(|n| self.p(n));
        self.tape.linear(x, wt, bt)
    }

    pub fn layer_norm_p(&mut self, x: Tid, prefix: &str) -> Tid {
        let g = self.p(&format!("{prefix}.g"));
        let b = self.p(&format!("{prefix}.b"));
        self.tape.layer_norm(x, g, b, fl(crate::ops::LAYERNORM_EPS))
    }

    /// Scaled dot-product attention over already-projected q/k/v, split into
    /// heads and concatenated back. No output projection.
    pub fn attention_core(
        &mut self,
        q: Tid,
        k: Tid,
        v: Tid,
        heads: usize,
        mask: Option<&[usize]>,
    ) -> Tid {
        let d = self.tape.cols(q);
        let hd = d / heads;
        let scale = fl::<F>(1.0 / (hd as f64).sqrt());
        let mut parts = Vec::with_capacity(heads);
        for h in 0..heads {
            let qh = self.tape.slice_cols(q, h * hd, hd);
            let kh = self.tape.slice_cols(k, h * hd, hd);
            let vh = self.tape.slice_cols(v, h * hd, hd);
            let scores = self.tape.matmul_tb(qh, kh);
            let scaled = self.tape.scale(scores, scale);
            let attn = self.tape.softmax_rows(scaled, mask.map(|m| m.to_vec()));
            parts.push(self.tape.matmul(attn, vh));
        }
        let mut out = parts[0];
        for &part in &parts[1..] {
            out = self.tape.concat_cols(out, part);
        }
        out
    }

    /// Full multi-head attention block with q/k/v/output projections.
    pub fn mha_p(
        &mut self,
        query: Tid,
        key: Tid,
        value: Tid,
        prefix: &str,
        mask: Option<&[usize]>,
    ) -> Tid {
        let q = self.linear_p(query, &format!("{prefix}.wq"), Some(&format!("{prefix}.bq")));
        let k = self.linear_p(key, &format!("{prefix}.wk"), Some(&format!("{prefix}.bk")));
        let v = self.linear_p(value, &format!("{prefix}.wv"), Some(&format!("{prefix}.bv")));
        let heads = self.cfg.num_heads;
        let ctx = self.attention_core(q, k, v, heads, mask);
        self.linear_p(ctx, &format!("{prefix}.wo"), Some(&format!("{prefix}.bo")))
    }

    /// One LSTM step from (h, c) over input row `x`.
    fn lstm_cell(
        &mut self,
        x: Tid,
        h: Tid,
        c: Tid,
        prefix: &str,
        hidden: usize,
    ) -> (Tid, Tid) {
        let gx = self.linear_p(x, &format!("{prefix}.w_ih"), Some(&format!("{prefix}.b_ih")));
        let gh = self.linear_p(h, &format!("{prefix}.w_hh"), Some(&format!("{prefix}.b_hh")));
        let g = self.tape.add(gx, gh);
        let i_pre = self.tape.slice_cols(g, 0, hidden);
        let f_pre = self.tape.slice_cols(g, hidden, hidden);
        let g_pre = self.tape.slice_cols(g, 2 * hidden, hidden);
        let o_pre = self.tape.slice_cols(g, 3 * hidden, hidden);
        let i = self.tape.sigmoid(i_pre);
        let f = self.tape.sigmoid(f_pre);
        let gg = self.tape.tanh(g_pre);
        let o = self.tape.sigmoid(o_pre);
        let fc = self.tape.mul(f, c);
        let ig = self.tape.mul(i, gg);
        let c_new = self.tape.add(fc, ig);
        let ct = self.tape.tanh(c_new);
        let h_new = self.tape.mul(o, ct);
        (h_new, c_new)
    }

    /// Runs an LSTM over the rows of `inputs` in the given order, returning
    /// per-input-row outputs (aligned to input positions) and the final
    /// hidden state.
    pub fn lstm_seq(
        &mut self,
        inputs: Tid,
        prefix: &str,
        hidden: usize,
        reverse: bool,
    ) -> (Tid, Tid) {
        let n = self.tape.rows(inputs);
        let mut h = self.tape.leaf(1, hidden, vec![F::zero(); hidden]);
        let mut c = self.tape.leaf(1, hidden, vec![F::zero(); hidden]);
        let mut outs: Vec<Tid> = vec![h; n];
        let order: Vec<usize> =
            if reverse { (0..n).rev().collect() } else { (0..n).collect() };
        for t in order {
            let x = self.tape.slice_rows(inputs, t, 1);
            let (h2, c2) = self.lstm_cell(x, h, c, prefix, hidden);
            h = h2;
            c = c2;
            outs[t] = h;
        }
        let all = self.tape.concat_rows(&outs);
        (all, h)
    }

    /// Combine module: feed-forward over the layer-normed concatenation of
    /// the biased and raw embeddings.
    pub fn combine(&mut self, biased: Tid, raw: Tid, prefix: &str) -> Tid {
        let lb = self.layer_norm_p(biased, &format!("{prefix}.ln_b"));
        let lq = self.layer_norm_p(raw, &format!("{prefix}.ln_q"));
        let cat = self.tape.concat_cols(lb, lq);
        self.linear_p(cat, &format!("{prefix}.cmb.w"), Some(&format!("{prefix}.cmb.b")))
    }

    // ── module forwards ─────────────────────────────────────────────

    /// Context phrase matrix: learned no-bias row plus one embedding per
    /// phrase (token embeddings -> BLSTM -> projected final states).
    pub fn encode_context(&mut self, phrases: &[Vec<usize>]) -> Tid {
        let ch = self.cfg.ctx_hidden;
        let mut parts = vec![self.p("ctx.null")];
        for phrase in phrases {
            let table = self.p("pred.embed");
            let emb = self.tape.gather_rows(table, phrase.clone());
            let (_, hf_last) = self.lstm_seq(emb, "ctx.fwd", ch, false);
            let (_, hb_last) = self.lstm_seq(emb, "ctx.bwd", ch, true);
            let cat = self.tape.concat_cols(hf_last, hb_last);
            parts.push(self.linear_p(cat, "ctx.proj.w", Some("ctx.proj.b")));
        }
        self.tape.concat_rows(&parts)
    }

    /// Causal self-attention encoder over acoustic frames.
    pub fn encode_audio(&mut self, frames: Tid) -> Tid {
        let t_len = self.tape.rows(frames);
        let d = self.cfg.model_dim;
        let mut x = self.linear_p(frames, "enc.in.w", Some("enc.in.b"));
        if self.cfg.pos_enc {
            let mut pe = vec![F::zero(); t_len * d];
            for t in 0..t_len {
                for ch in 0..d {
                    pe[t * d + ch] = kernels::pos_enc(t, ch, d);
                }
            }
            let pe_leaf = self.tape.leaf(t_len, d, pe);
            x = self.tape.add(x, pe_leaf);
        }
        let causal: Vec<usize> = (1..=t_len).collect();
        for b in 0..self.cfg.enc_blocks {
            let pre = format!("enc.blk{b}");
            let ln1 = self.layer_norm_p(x, &format!("{pre}.ln1"));
            let attn = self.mha_p(ln1, ln1, ln1, &format!("{pre}.attn"), Some(&causal));
            x = self.tape.add(x, attn);
            let ln2 = self.layer_norm_p(x, &format!("{pre}.ln2"));
            let f1 = self.linear_p(ln2, &format!("{pre}.ff.w1"), Some(&format!("{pre}.ff.b1")));
            let th = self.tape.tanh(f1);
            let f2 = self.linear_p(th, &format!("{pre}.ff.w2"), Some(&format!("{pre}.ff.b2")));
            x = self.tape.add(x, f2);
        }
        self.layer_norm_p(x, "enc.lnf")
    }

    /// Teacher-forced prediction network over [sos, y_1..y_U]; returns U+1
    /// output rows.
    pub fn predictor(&mut self, targets: &[usize]) -> Tid {
        let d = self.cfg.model_dim;
        let mut ids = Vec::with_capacity(targets.len() + 1);
        ids.push(self.cfg.sos());
        ids.extend_from_slice(targets);
        let table = self.p("pred.embed");
        let mut x = self.tape.gather_rows(table, ids);
        for l in 0..self.cfg.pred_layers {
            let (all, _) = self.lstm_seq(x, &format!("pred.l{l}"), d, false);
            x = all;
        }
        x
    }

    /// Biasing layer for one side: attention from `queries` over the context
    /// matrix, then the combine module. Returns (biased, combined).
    pub fn bias_embed(&mut self, queries: Tid, ctx: Tid, side: &str) -> (Tid, Tid) {
        let pre = format!("bias.{side}");
        let biased = self.mha_p(queries, ctx, ctx, &format!("{pre}.attn"), None);
        let combined = self.combine(biased, queries, &pre);
        (biased, combined)
    }

    /// Joint logits over the full (T, U+1) lattice, rows ordered t*(U+1)+u.
    pub fn joint_lattice(&mut self, enc_combined: Tid, pred_combined: Tid) -> Tid {
        let we = self.p("joint.we");
        let wp = self.p("joint.wp");
        let e = self.tape.matmul_tb(enc_combined, we);
        let p0 = self.tape.matmul_tb(pred_combined, wp);
        let b = self.p("joint.b");
        let p = self.tape.add_row_bcast(p0, b);
        let pairs = self.tape.outer_add_rows(e, p);
        let th = self.tape.tanh(pairs);
        self.linear_p(th, "joint.out.w", Some("joint.out.b"))
    }

    fn ed_activation(&mut self, x: Tid) -> Tid {
        match self.cfg.ed_activation {
            EdActivation::Identity => x,
            EdActivation::Sigmoid => self.tape.sigmoid(x),
        }
    }

    /// Detector attention + 2-class head over per-token query rows.
    /// For the predictor-based detector keys/values come from the context
    /// matrix; for the encoder-predictor variant from biased encoder rows.
    pub fn detector_logits(&mut self, queries: Tid, keys: Tid) -> Tid {
        let q0 = self.linear_p(queries, "det.wq", Some("det.bq"));
        let k0 = self.linear_p(keys, "det.wk", Some("det.bk"));
        let v0 = self.linear_p(keys, "det.wv", Some("det.bv"));
        let q = self.ed_activation(q0);
        let k = self.ed_activation(k0);
        let v = self.ed_activation(v0);
        let heads = self.cfg.num_heads;
        let h_ed = self.attention_core(q, k, v, heads, None);
        self.linear_p(h_ed, "det.cls.w", Some("det.cls.b"))
    }
}

/// Everything the loss assembly needs from one utterance forward pass.
pub struct UtteranceForward {
    pub enc_out: Tid,
    pub enc_biased: Tid,
    pub enc_combined: Tid,
    pub pred_out: Tid,
    pub pred_biased: Tid,
    pub pred_combined: Tid,
    pub lattice_logits: Tid,
    /// Detector logits for targets 1..=U (rows pair with per-token labels).
    pub detector_logits: Option<Tid>,
}

/// Full teacher-forced forward pass for one utterance.
pub fn utterance_forward<F: Scalar>(
    g: &mut Graph<'_, F>,
    frames: &crate::tensor::Tensor<F>,
    targets: &[usize],
    phrases: &[Vec<usize>],
) -> UtteranceForward {
    let frames_leaf = g.tape.leaf(frames.rows(), frames.cols(), frames.data().to_vec());
    let ctx = g.encode_context(phrases);
    let enc_out = g.encode_audio(frames_leaf);
    let (enc_biased, enc_combined) = g.bias_embed(enc_out, ctx, "enc");
    let pred_out = g.predictor(targets);
    let (pred_biased, pred_combined) = g.bias_embed(pred_out, ctx, "pred");
    let lattice_logits = g.joint_lattice(enc_combined, pred_combined);

    let detector_logits = match g.cfg.detector {
        DetectorKind::None => None,
        _ if targets.is_empty() => None,
        DetectorKind::Predictor => {
            let x = g.tape.slice_rows(pred_combined, 1, targets.len());
            Some(g.detector_logits(x, ctx))
        }
        DetectorKind::EncoderPredictor => {
            let x = g.tape.slice_rows(pred_biased, 1, targets.len());
            Some(g.detector_logits(x, enc_biased))
        }
    };

    UtteranceForward {
        enc_out,
        enc_biased,
        enc_combined,
        pred_out,
        pred_biased,
        pred_combined,
        lattice_logits,
        detector_logits,
    }
}

//! Training loop: adaptive-moment optimizer with gradient clipping, a
//! seeded per-epoch bias-list policy, and per-epoch dev scoring.

use crate::decode::{decode_greedy, DecodeMode, DecodeOptions};
use crate::detector::make_ed_labels;
use crate::error::{CoreError, Result};
use crate::loss::{joint_loss, utterance_loss};
use crate::metrics::corpus_error_rate;
use crate::model::context::ContextPhrase;
use crate::model::graph::Graph;
use crate::model::Model;
use crate::params::{rng_for, ParamStore};
use crate::scalar::{fl, Scalar};
use crate::synth::{phrase_occurs, Corpus, Utterance};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub grad_clip: f64,
    pub lambda1: f64,
    pub seed: u64,
    /// Bias-list size used for per-epoch dev scoring.
    pub dev_list_size: usize,
    /// Largest bias list drawn during training.
    pub max_train_list: usize,
    /// Cap on dev utterances scored per epoch (0 = all).
    pub dev_limit: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 6,
            batch_size: 8,
            learning_rate: 1e-3,
            grad_clip: 5.0,
            lambda1: crate::loss::DEFAULT_LAMBDA1,
            seed: 1,
            dev_list_size: 10,
            max_train_list: 20,
            dev_limit: 100,
        }
    }
}

/// Adam with bias correction; moments keyed by parameter name.
pub struct Adam<F: Scalar> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: BTreeMap<String, Vec<F>>,
    v: BTreeMap<String, Vec<F>>,
}

impl<F: Scalar> Adam<F> {
    pub fn new(lr: f64) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: BTreeMap::new(), v: BTreeMap::new() }
    }

    /// One update from the accumulated gradients; clips the global gradient
    /// norm first. Gradients are left untouched (caller zeroes them).
    pub fn step(&mut self, params: &mut ParamStore<F>, grad_clip: f64) {
        self.step += 1;
        let norm = params.grad_norm();
        let scale = if grad_clip > 0.0 && norm > grad_clip { grad_clip / norm } else { 1.0 };
        let b1 = self.beta1;
        let b2 = self.beta2;
        let bc1 = 1.0 - b1.powi(self.step as i32);
        let bc2 = 1.0 - b2.powi(self.step as i32);
        let lr = self.lr * bc2.sqrt() / bc1;
        for (name, p) in params.iter_mut() {
            let n = p.grad.len();
            let m = self.m.entry(name.to_string()).or_insert_with(|| vec![F::zero(); n]);
            let v = self.v.entry(name.to_string()).or_insert_with(|| vec![F::zero(); n]);
            for i in 0..n {
                let g = (p.grad[i].to_f64_lossy()) * scale;
                let mi = b1 * m[i].to_f64_lossy() + (1.0 - b1) * g;
                let vi = b2 * v[i].to_f64_lossy() + (1.0 - b2) * g * g;
                m[i] = fl(mi);
                v[i] = fl(vi);
                let upd = lr * mi / (vi.sqrt() + self.eps);
                let w = p.value.data_mut();
                w[i] = w[i] - fl::<F>(upd);
            }
        }
    }
}

/// Acoustic sibling of an entity phrase: same head, the other member of the
/// tail pair.
fn sibling_phrase(corpus: &Corpus, phrase: &ContextPhrase) -> Option<ContextPhrase> {
    let layout = corpus.cfg.layout();
    let tail = *phrase.last()?;
    if !layout.tails.contains(&tail) {
        return None;
    }
    let sib = layout.tails.start + ((tail - layout.tails.start) ^ 1);
    let mut out = phrase.clone();
    *out.last_mut().unwrap() = sib;
    Some(out)
}

/// The seeded training-time list policy.
///
/// Entity utterances: 85% list with the true entities plus distractors,
/// 10% distractor-only list (the detector's negative lessons), 5% empty.
/// Entity-free utterances always train with an empty list, so a large
/// irrelevant list at test time is a genuine distribution shift — the cost
/// of always-on biasing on common traffic. Distractors exclude the acoustic
/// siblings of the utterance's entities: training rehearses lists that can
/// actually resolve the tail ambiguity (evaluation lists make no such
/// concession).
pub fn training_bias_list(
    corpus: &Corpus,
    utt: &Utterance,
    epoch: usize,
    seed: u64,
    max_list: usize,
) -> Vec<ContextPhrase> {
    let mut rng = rng_for(seed, &format!("trainlist/{epoch}/{}", utt.id));
    let draw = rng.gen::<f64>();
    let mut list: Vec<ContextPhrase> = Vec::new();
    let mut want = 0usize;
    let mut include_entities = false;
    if !utt.entities.is_empty() {
        let lo = (max_list / 2).max(4);
        if draw < 0.85 {
            include_entities = true;
            want = rng.gen_range(lo..=max_list.max(lo));
        } else if draw < 0.95 {
            want = rng.gen_range(lo..=max_list.max(lo));
        }
    }
    if want == 0 {
        return list;
    }
    let siblings: Vec<ContextPhrase> =
        utt.entities.iter().filter_map(|e| sibling_phrase(corpus, e)).collect();
    if include_entities {
        for e in &utt.entities {
            if !list.contains(e) {
                list.push(e.clone());
            }
        }
    }
    let mut pool: Vec<&ContextPhrase> = corpus
        .distractor_pool
        .iter()
        .filter(|p| !phrase_occurs(&utt.tokens, p) && !siblings.contains(p))
        .collect();
    pool.shuffle(&mut rng);
    for c in pool {
        if list.len() >= want {
            break;
        }
        if !list.contains(c) {
            list.push(c.clone());
        }
    }
    list
}

#[derive(Debug, Clone, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub l_transducer: f64,
    pub l_bias: f64,
    pub l_total: f64,
    pub dev_wer: f64,
}

/// Pooled dev WER with always-on biasing over per-utterance lists.
fn dev_wer(model: &Model<f32>, corpus: &Corpus, tc: &TrainConfig) -> Result<f64> {
    let limit = if tc.dev_limit == 0 { corpus.dev.len() } else { tc.dev_limit };
    let mut pairs = Vec::new();
    for utt in corpus.dev.iter().take(limit) {
        let mode = if utt.entities.is_empty() {
            crate::synth::ListMode::Common
        } else {
            crate::synth::ListMode::Personalized
        };
        let list =
            crate::synth::build_bias_list(corpus, utt, mode, tc.dev_list_size, tc.seed)?;
        let hyp =
            decode_greedy(model, &utt.frames, &list, DecodeMode::AlwaysOn, &DecodeOptions::default())?;
        pairs.push((utt.tokens.clone(), hyp.tokens));
    }
    Ok(corpus_error_rate(&pairs)?.rate)
}

/// Runs the full training loop, mutating `model` in place. Aborts with a
/// diagnostic if the loss goes non-finite.
pub fn train(model: &mut Model<f32>, corpus: &Corpus, tc: &TrainConfig) -> Result<Vec<EpochLog>> {
    let mut adam = Adam::new(tc.learning_rate);
    let mut logs = Vec::new();
    let lambda1 = if model.cfg.detector == crate::model::DetectorKind::None {
        0.0
    } else {
        tc.lambda1
    };

    for epoch in 0..tc.epochs {
        let mut order: Vec<usize> = (0..corpus.train.len()).collect();
        let mut order_rng = rng_for(tc.seed, &format!("order/{epoch}"));
        order.shuffle(&mut order_rng);

        let mut sum_trans = 0.0;
        let mut sum_bias = 0.0;
        let mut seen = 0usize;
        let mut in_batch = 0usize;
        model.params.zero_grads();

        for &i in &order {
            let utt = &corpus.train[i];
            let list = training_bias_list(corpus, utt, epoch, tc.seed, tc.max_train_list);
            let labels = make_ed_labels(&utt.tokens, &list);

            let grads = {
                let mut g = Graph::new(model);
                let out =
                    utterance_loss(&mut g, &utt.frames.feats, &utt.tokens, &list, &labels, lambda1)?;
                if !out.report.l_total.is_finite() {
                    return Err(CoreError::Diverged(format!(
                        "non-finite loss at epoch {epoch}, utterance {}",
                        utt.id
                    )));
                }
                sum_trans += out.report.l_transducer;
                sum_bias += out.report.l_bias;
                g.tape.backward(out.total)?;
                g.take_grads()
            };
            for (name, grad) in grads {
                model.params.accumulate_grad(&name, &grad);
            }
            seen += 1;
            in_batch += 1;
            if in_batch == tc.batch_size {
                adam.step(&mut model.params, tc.grad_clip);
                model.params.zero_grads();
                in_batch = 0;
            }
        }
        if in_batch > 0 {
            adam.step(&mut model.params, tc.grad_clip);
            model.params.zero_grads();
        }

        let report = joint_loss(sum_trans / seen as f64, sum_bias / seen as f64, lambda1);
        let wer = dev_wer(model, corpus, tc)?;
        log::info!(
            "epoch {epoch}: transducer {:.4} bias {:.4} total {:.4} dev-wer {:.4}",
            report.l_transducer,
            report.l_bias,
            report.l_total,
            wer
        );
        logs.push(EpochLog {
            epoch,
            l_transducer: report.l_transducer,
            l_bias: report.l_bias,
            l_total: report.l_total,
            dev_wer: wer,
        });
    }
    Ok(logs)
}

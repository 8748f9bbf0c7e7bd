//! Streaming greedy transducer decoding with switchable contextual biasing.
//!
//! Per frame: encode, bias the encoder output according to the current gate,
//! then emit argmax tokens until blank (or the per-frame symbol guard). Every
//! non-blank token triggers a gating decision whose effect lasts until the
//! next decision:
//!
//! * `AlwaysOff`   — null (empty-list) bias everywhere.
//! * `AlwaysOn`    — full-list bias everywhere.
//! * `AdaptivePed` — predictor-based detector; while off, the joint consumes
//!   null-biased embeddings and the full-list encoder attention is skipped.
//! * `AdaptiveEped`— encoder-predictor detector; full-list biases are always
//!   computed (the detector consumes them) and null-biased replacements are
//!   recomputed for the joint while off.
//! * `Random50`    — seeded Bernoulli(0.5) gate per token.

use crate::error::{CoreError, Result};
use crate::model::context::{encode_context, ContextEmbeddings, ContextPhrase};
use crate::model::infer::{
    bias_attend, combine_row, detector_logits_row, ed_decide, joint_logits, BiasCache, BiasSide,
    DetectorKeys, EncoderStream, PredictorStream,
};
use crate::model::{AcousticFrames, DetectorKind, Model};
use crate::ops::LstmState;
use crate::scalar::Scalar;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeMode {
    AlwaysOff,
    AlwaysOn,
    AdaptivePed,
    AdaptiveEped,
    Random50 { seed: u64 },
}

impl DecodeMode {
    pub fn name(&self) -> &'static str {
        match self {
            DecodeMode::AlwaysOff => "always-off",
            DecodeMode::AlwaysOn => "always-on",
            DecodeMode::AdaptivePed => "adaptive-ped",
            DecodeMode::AdaptiveEped => "adaptive-eped",
            DecodeMode::Random50 { .. } => "random50",
        }
    }

    /// Parses a mode name; `random50` takes its seed from `default_seed`
    /// unless given as `random50:<seed>`.
    pub fn parse(s: &str, default_seed: u64) -> Result<Self> {
        match s {
            "always-off" => Ok(DecodeMode::AlwaysOff),
            "always-on" => Ok(DecodeMode::AlwaysOn),
            "adaptive-ped" => Ok(DecodeMode::AdaptivePed),
            "adaptive-eped" => Ok(DecodeMode::AdaptiveEped),
            "random50" => Ok(DecodeMode::Random50 { seed: default_seed }),
            other => {
                if let Some(seed) = other.strip_prefix("random50:") {
                    let seed = seed.parse().map_err(|_| {
                        CoreError::Config(format!("bad random50 seed in {other:?}"))
                    })?;
                    Ok(DecodeMode::Random50 { seed })
                } else {
                    Err(CoreError::Config(format!("unknown decode mode {other:?}")))
                }
            }
        }
    }
}

/// Gate forcing: replaces detector decisions (and the initial gate for
/// `Constant`). Used for ablation equivalences and trace replay.
#[derive(Debug, Clone)]
pub enum ForcedGates {
    Constant(bool),
    Trace(Vec<bool>),
}

#[derive(Debug, Clone)]
pub struct DecodeOptions {
    pub max_symbols_per_frame: usize,
    pub initial_gate: bool,
    /// Once the gate turns on it stays on for the rest of the utterance.
    pub latch: bool,
    pub forced: Option<ForcedGates>,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        DecodeOptions { max_symbols_per_frame: 5, initial_gate: true, latch: false, forced: None }
    }
}

/// Monotone operation counters; the machine-independent cost proxy.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct OpCounters {
    /// Full-list encoder-side bias attention calls.
    pub enc_bias_full: u64,
    /// Null-list encoder-side bias attention calls.
    pub enc_bias_null: u64,
    pub pred_bias_full: u64,
    pub pred_bias_null: u64,
    pub detector_calls: u64,
    pub joint_calls: u64,
}

impl OpCounters {
    pub fn total(&self) -> u64 {
        self.enc_bias_full
            + self.enc_bias_null
            + self.pred_bias_full
            + self.pred_bias_null
            + self.detector_calls
    }

    pub fn add(&mut self, other: &OpCounters) {
        self.enc_bias_full += other.enc_bias_full;
        self.enc_bias_null += other.enc_bias_null;
        self.pred_bias_full += other.pred_bias_full;
        self.pred_bias_null += other.pred_bias_null;
        self.detector_calls += other.detector_calls;
        self.joint_calls += other.joint_calls;
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceStep {
    pub frame: usize,
    pub token: usize,
    pub gate: bool,
    pub counters: OpCounters,
}

/// Decode result: emitted tokens, the detector/gate trace, final predictor
/// state and cost counters.
#[derive(Debug, Clone)]
pub struct Hypothesis<F: Scalar> {
    pub tokens: Vec<usize>,
    /// Gate decision recorded at each non-blank token.
    pub gate_trace: Vec<bool>,
    pub initial_gate: bool,
    pub counters: OpCounters,
    pub steps: Vec<TraceStep>,
    pub predictor_state: Vec<LstmState<F>>,
    pub max_symbols_per_frame: usize,
}

impl<F: Scalar> Hypothesis<F> {
    /// One JSON record per emitted token.
    pub fn trace_jsonl(&self) -> String {
        let mut out = String::new();
        for s in &self.steps {
            out.push_str(&serde_json::to_string(s).expect("trace serializes"));
            out.push('\n');
        }
        out
    }
}

/// The no-bias (empty list) embedding and its derived per-side attention
/// caches; a pure function of the frozen parameters, computed once per
/// checkpoint and shared by every decode.
#[derive(Debug, Clone)]
pub struct NullBiasCache<F: Scalar> {
    pub ctx: ContextEmbeddings<F>,
    pub enc: BiasCache<F>,
    pub pred: BiasCache<F>,
}

pub fn null_bias_cache<F: Scalar>(m: &Model<F>) -> Result<NullBiasCache<F>> {
    let ctx = encode_context(m, &[])?;
    let enc = BiasCache::new(m, BiasSide::Enc, &ctx);
    let pred = BiasCache::new(m, BiasSide::Pred, &ctx);
    Ok(NullBiasCache { ctx, enc, pred })
}

struct FullBias<F: Scalar> {
    enc: BiasCache<F>,
    pred: BiasCache<F>,
    /// Detector keys over the context matrix (predictor-based detector).
    det_ctx: Option<DetectorKeys<F>>,
}

fn argmax<F: Scalar>(v: &[F]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

pub fn decode_greedy<F: Scalar>(
    m: &Model<F>,
    frames: &AcousticFrames<F>,
    bias_list: &[ContextPhrase],
    mode: DecodeMode,
    opts: &DecodeOptions,
) -> Result<Hypothesis<F>> {
    let t_len = frames.feats.rows();
    if t_len == 0 {
        return Err(CoreError::InvalidArgument("cannot decode zero frames".into()));
    }
    match mode {
        DecodeMode::AdaptivePed if m.cfg.detector != DetectorKind::Predictor => {
            return Err(CoreError::Capability(
                "adaptive-ped requires a catt+ped checkpoint".into(),
            ));
        }
        DecodeMode::AdaptiveEped if m.cfg.detector != DetectorKind::EncoderPredictor => {
            return Err(CoreError::Capability(
                "adaptive-eped requires a catt+eped checkpoint".into(),
            ));
        }
        _ => {}
    }

    let mut mode = mode;
    if bias_list.is_empty() && mode != DecodeMode::AlwaysOff {
        log::warn!("empty bias list: {} decode falls back to always-off semantics", mode.name());
        mode = DecodeMode::AlwaysOff;
    }

    let null = null_bias_cache(m)?;
    let full: Option<FullBias<F>> = if mode == DecodeMode::AlwaysOff {
        None
    } else {
        let ctx = encode_context(m, bias_list)?;
        let det_ctx = (mode == DecodeMode::AdaptivePed)
            .then(|| DetectorKeys::from_context(m, &ctx));
        Some(FullBias {
            enc: BiasCache::new(m, BiasSide::Enc, &ctx),
            pred: BiasCache::new(m, BiasSide::Pred, &ctx),
            det_ctx,
        })
    };

    let mut counters = OpCounters::default();
    let mut rng = match mode {
        DecodeMode::Random50 { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
        _ => None,
    };

    let initial_gate = match (&opts.forced, mode) {
        (Some(ForcedGates::Constant(b)), _) => *b,
        (_, DecodeMode::AlwaysOn) => true,
        (_, DecodeMode::AlwaysOff) => false,
        _ => opts.initial_gate,
    };
    let mut gate = initial_gate;

    // Encoder-side combined row for the current frame under a given gate.
    // `eped_full_row` is the already-computed full-list biased row in
    // encoder-predictor mode (no second attention call needed when on).
    let enc_combined_for_gate = |gate: bool,
                                 h_e: &[F],
                                 eped_full_row: Option<&Vec<F>>,
                                 counters: &mut OpCounters|
     -> Vec<F> {
        let biased = if gate {
            if let Some(row) = eped_full_row {
                row.clone()
            } else {
                counters.enc_bias_full += 1;
                bias_attend(m, h_e, &full.as_ref().expect("gate on requires full list").enc)
            }
        } else {
            counters.enc_bias_null += 1;
            bias_attend(m, h_e, &null.enc)
        };
        combine_row(m, BiasSide::Enc, &biased, h_e)
    };

    let pred_side_for_gate =
        |gate: bool, p_raw: &[F], counters: &mut OpCounters| -> Vec<F> {
            let biased = if gate {
                counters.pred_bias_full += 1;
                bias_attend(m, p_raw, &full.as_ref().expect("gate on requires full list").pred)
            } else {
                counters.pred_bias_null += 1;
                bias_attend(m, p_raw, &null.pred)
            };
            combine_row(m, BiasSide::Pred, &biased, p_raw)
        };

    let mut enc_stream = EncoderStream::new(m);
    let mut pred_stream = PredictorStream::new(m);
    let mut eped_keys = DetectorKeys::empty();

    let p_raw = pred_stream.step_start()?;
    let mut pred_combined = pred_side_for_gate(gate, &p_raw, &mut counters);

    let mut tokens = Vec::new();
    let mut gate_trace = Vec::new();
    let mut steps = Vec::new();
    let blank = m.cfg.blank();

    for t in 0..t_len {
        let h_e = enc_stream.push(frames.feats.row(t))?;

        // Encoder-predictor mode always computes the full-list biased row:
        // the detector attends over it even while the joint is gated off.
        let eped_full_row = if mode == DecodeMode::AdaptiveEped {
            counters.enc_bias_full += 1;
            let row = bias_attend(m, &h_e, &full.as_ref().unwrap().enc);
            eped_keys.push(m, &row);
            Some(row)
        } else {
            None
        };
        let mut h_cae = enc_combined_for_gate(gate, &h_e, eped_full_row.as_ref(), &mut counters);

        let mut symbols = 0usize;
        loop {
            counters.joint_calls += 1;
            let logits = joint_logits(m, &h_cae, &pred_combined);
            let k = argmax(&logits);
            if k == blank {
                break;
            }
            tokens.push(k);
            let p_raw = pred_stream.step_token(k)?;

            // Gate decision for this token.
            let mut precomputed_cap: Option<Vec<F>> = None;
            let decision = match &opts.forced {
                Some(ForcedGates::Constant(b)) => *b,
                Some(ForcedGates::Trace(trace)) => {
                    *trace.get(tokens.len() - 1).ok_or_else(|| {
                        CoreError::InvalidArgument("forced gate trace shorter than decode".into())
                    })?
                }
                None => match mode {
                    DecodeMode::AlwaysOn => true,
                    DecodeMode::AlwaysOff => false,
                    DecodeMode::Random50 { .. } => rng.as_mut().unwrap().gen_bool(0.5),
                    DecodeMode::AdaptivePed => {
                        // Full-list query so the detector can see candidates.
                        counters.pred_bias_full += 1;
                        let fb = full.as_ref().unwrap();
                        let pb = bias_attend(m, &p_raw, &fb.pred);
                        let cap = combine_row(m, BiasSide::Pred, &pb, &p_raw);
                        counters.detector_calls += 1;
                        let dl = detector_logits_row(m, fb.det_ctx.as_ref().unwrap(), &cap)?;
                        precomputed_cap = Some(cap);
                        ed_decide(dl)
                    }
                    DecodeMode::AdaptiveEped => {
                        counters.pred_bias_full += 1;
                        let fb = full.as_ref().unwrap();
                        let pb = bias_attend(m, &p_raw, &fb.pred);
                        counters.detector_calls += 1;
                        let dl = detector_logits_row(m, &eped_keys, &pb)?;
                        precomputed_cap = Some(combine_row(m, BiasSide::Pred, &pb, &p_raw));
                        ed_decide(dl)
                    }
                },
            };
            let new_gate = decision || (opts.latch && gate);
            gate_trace.push(new_gate);

            // Predictor side for subsequent joints.
            pred_combined = if new_gate {
                match precomputed_cap {
                    Some(cap) => cap,
                    None => pred_side_for_gate(true, &p_raw, &mut counters),
                }
            } else {
                pred_side_for_gate(false, &p_raw, &mut counters)
            };

            // A flipped gate re-biases the current frame for the next joint.
            if new_gate != gate {
                h_cae =
                    enc_combined_for_gate(new_gate, &h_e, eped_full_row.as_ref(), &mut counters);
            }
            gate = new_gate;

            steps.push(TraceStep { frame: t, token: k, gate: new_gate, counters });

            symbols += 1;
            if symbols >= opts.max_symbols_per_frame {
                break;
            }
        }
    }

    Ok(Hypothesis {
        tokens,
        gate_trace,
        initial_gate,
        counters,
        steps,
        predictor_state: pred_stream.state().to_vec(),
        max_symbols_per_frame: opts.max_symbols_per_frame,
    })
}

/// Replays a recorded gate trace; decisions come from the trace instead of
/// the detector.
pub fn replay_with_trace<F: Scalar>(
    m: &Model<F>,
    frames: &AcousticFrames<F>,
    bias_list: &[ContextPhrase],
    mode: DecodeMode,
    base_opts: &DecodeOptions,
    hyp: &Hypothesis<F>,
) -> Result<Hypothesis<F>> {
    let opts = DecodeOptions {
        initial_gate: hyp.initial_gate,
        forced: Some(ForcedGates::Trace(hyp.gate_trace.clone())),
        ..base_opts.clone()
    };
    decode_greedy(m, frames, bias_list, mode, &opts)
}

//! Finite-difference gradient harness shared by the gradcheck and
//! acceptance suites.
//!
//! 64-bit: central differences in f64 (h = 1e-6), relative error <= 1e-6,
//! with a small absolute floor absorbing the roundoff of the difference
//! quotient itself (visible on structurally-zero gradients such as
//! broadcast key biases, which cancel in softmax).
//!
//! 32-bit: the analytic f32 gradient is compared against an accurately
//! evaluated difference quotient (the f32 parameters are lifted to f64 and
//! perturbed there, so finite-difference noise does not drown the check),
//! relative error <= 1e-3.

use catt::detector::make_ed_labels;
use catt::loss::utterance_loss;
use catt::model::graph::Graph;
use catt::model::{DetectorKind, Model, ModelConfig};
use catt::params::rng_for;
use catt::scalar::{fl, Scalar};
use catt::tape::Tid;
use catt::tensor::Tensor;
use rand::Rng;

pub const FEAT: usize = 5;
pub const DIM: usize = 8;
pub const T_LEN: usize = 4;
pub const SEEDS: u64 = 20;

pub fn cfg(detector: DetectorKind) -> ModelConfig {
    ModelConfig {
        feat_dim: FEAT,
        model_dim: DIM,
        num_heads: 2,
        enc_blocks: 1,
        enc_ff_dim: 12,
        pred_layers: 1,
        joint_hidden: 8,
        ctx_hidden: 4,
        vocab: 8,
        pos_enc: true,
        detector,
        ..Default::default()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CaseKind {
    Linear,
    LayerNorm,
    Mha,
    MhaCausal,
    LstmSeq,
    ContextBlstm,
    Encoder,
    BiasCombine,
    Joint,
    DetectorAttention,
    FullPed,
    FullEped,
}

pub const ALL_CASES: [CaseKind; 12] = [
    CaseKind::Linear,
    CaseKind::LayerNorm,
    CaseKind::Mha,
    CaseKind::MhaCausal,
    CaseKind::LstmSeq,
    CaseKind::ContextBlstm,
    CaseKind::Encoder,
    CaseKind::BiasCombine,
    CaseKind::Joint,
    CaseKind::DetectorAttention,
    CaseKind::FullPed,
    CaseKind::FullEped,
];

pub struct CaseInputs {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub frames: Vec<f64>,
    pub weights: Vec<f64>,
    pub targets: Vec<usize>,
    pub phrases: Vec<Vec<usize>>,
}

pub fn case_inputs(seed: u64) -> CaseInputs {
    let mut rng = rng_for(seed, "gradcheck-inputs");
    let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-0.9..0.9)).collect() };
    CaseInputs {
        a: draw(3 * DIM),
        b: draw(4 * DIM),
        frames: draw(T_LEN * FEAT),
        weights: draw(2048),
        targets: vec![1, 2],
        phrases: vec![vec![1, 2], vec![3]],
    }
}

pub fn detector_for(kind: CaseKind) -> DetectorKind {
    match kind {
        CaseKind::DetectorAttention | CaseKind::FullPed => DetectorKind::Predictor,
        CaseKind::FullEped => DetectorKind::EncoderPredictor,
        _ => DetectorKind::None,
    }
}

/// Builds the case's scalar loss on the graph. The loss is the sum of the
/// case's output weighted by a fixed random vector, so every output
/// component contributes to every gradient.
pub fn build_case<F: Scalar>(kind: CaseKind, inputs: &CaseInputs, g: &mut Graph<'_, F>) -> Tid {
    let to_f: Vec<F> = inputs.a.iter().map(|&v| fl(v)).collect();
    let a = g.tape.leaf(3, DIM, to_f);
    let weighted = |g: &mut Graph<'_, F>, out: Tid| -> Tid {
        let rows = g.tape.rows(out);
        let cols = g.tape.cols(out);
        let w: Vec<F> = inputs.weights[..rows * cols].iter().map(|&v| fl(v)).collect();
        let wl = g.tape.leaf(rows, cols, w);
        let m = g.tape.mul(out, wl);
        g.tape.sum_all(m)
    };
    match kind {
        CaseKind::Linear => {
            let frames: Vec<F> = inputs.frames.iter().map(|&v| fl(v)).collect();
            let x = g.tape.leaf(T_LEN, FEAT, frames);
            let out = g.linear_p(x, "enc.in.w", Some("enc.in.b"));
            weighted(g, out)
        }
        CaseKind::LayerNorm => {
            let out = g.layer_norm_p(a, "enc.blk0.ln1");
            weighted(g, out)
        }
        CaseKind::Mha => {
            let b: Vec<F> = inputs.b.iter().map(|&v| fl(v)).collect();
            let kv = g.tape.leaf(4, DIM, b);
            let out = g.mha_p(a, kv, kv, "enc.blk0.attn", None);
            weighted(g, out)
        }
        CaseKind::MhaCausal => {
            let mask = vec![1usize, 2, 3];
            let out = g.mha_p(a, a, a, "enc.blk0.attn", Some(&mask));
            weighted(g, out)
        }
        CaseKind::LstmSeq => {
            let (all, _) = g.lstm_seq(a, "pred.l0", DIM, false);
            weighted(g, all)
        }
        CaseKind::ContextBlstm => {
            let out = g.encode_context(&inputs.phrases);
            weighted(g, out)
        }
        CaseKind::Encoder => {
            let frames: Vec<F> = inputs.frames.iter().map(|&v| fl(v)).collect();
            let x = g.tape.leaf(T_LEN, FEAT, frames);
            let out = g.encode_audio(x);
            weighted(g, out)
        }
        CaseKind::BiasCombine => {
            let ctx = g.encode_context(&inputs.phrases);
            let (biased, combined) = g.bias_embed(a, ctx, "enc");
            let w1 = weighted(g, biased);
            let w2 = weighted(g, combined);
            g.tape.add(w1, w2)
        }
        CaseKind::Joint => {
            let b: Vec<F> = inputs.b.iter().map(|&v| fl(v)).collect();
            let p = g.tape.leaf(4, DIM, b);
            let out = g.joint_lattice(a, p);
            weighted(g, out)
        }
        CaseKind::DetectorAttention => {
            let b: Vec<F> = inputs.b.iter().map(|&v| fl(v)).collect();
            let keys = g.tape.leaf(4, DIM, b);
            let out = g.detector_logits(a, keys);
            weighted(g, out)
        }
        CaseKind::FullPed | CaseKind::FullEped => {
            let frames: Vec<F> = inputs.frames.iter().map(|&v| fl(v)).collect();
            let frames = Tensor::matrix(T_LEN, FEAT, frames).unwrap();
            let labels = make_ed_labels(&inputs.targets, &inputs.phrases);
            let out =
                utterance_loss(g, &frames, &inputs.targets, &inputs.phrases, &labels, 0.4)
                    .unwrap();
            out.total
        }
    }
}

pub fn loss_value<F: Scalar>(kind: CaseKind, inputs: &CaseInputs, model: &Model<F>) -> f64 {
    let mut g = Graph::new(model);
    let loss = build_case(kind, inputs, &mut g);
    g.tape.scalar_value(loss).to_f64_lossy()
}

pub fn analytic_grads<F: Scalar>(
    kind: CaseKind,
    inputs: &CaseInputs,
    model: &Model<F>,
) -> Vec<(String, Vec<F>)> {
    let mut g = Graph::new(model);
    let loss = build_case(kind, inputs, &mut g);
    g.tape.backward(loss).unwrap();
    let mut grads = g.take_grads();
    grads.sort_by(|x, y| x.0.cmp(&y.0));
    grads
}

fn sample_indices(n: usize, per_param: usize, rng: &mut impl Rng) -> Vec<usize> {
    if n <= per_param {
        (0..n).collect()
    } else {
        (0..per_param).map(|_| rng.gen_range(0..n)).collect()
    }
}

/// 64-bit check. Returns an error message on the first violation.
pub fn check_f64(kind: CaseKind, seed: u64) -> Result<(), String> {
    let inputs = case_inputs(seed);
    let model = Model::<f64>::init(cfg(detector_for(kind)), seed).unwrap();
    let grads = analytic_grads(kind, &inputs, &model);
    if grads.is_empty() {
        return Err(format!("{kind:?}: no gradients flowed"));
    }
    let h = 1e-6;
    let mut rng = rng_for(seed, &format!("probe64/{kind:?}"));
    for (name, grad) in &grads {
        for i in sample_indices(grad.len(), 3, &mut rng) {
            let mut plus = model.clone();
            plus.params.nudge(name, i, h);
            let mut minus = model.clone();
            minus.params.nudge(name, i, -h);
            let fd = (loss_value(kind, &inputs, &plus) - loss_value(kind, &inputs, &minus))
                / (2.0 * h);
            let ad = grad[i];
            let err = (ad - fd).abs();
            let tol = 1e-6 * ad.abs().max(fd.abs()) + 5e-9;
            if err > tol {
                return Err(format!(
                    "{kind:?} f64 {name}[{i}]: ad={ad:.12e} fd={fd:.12e} err={err:.3e}"
                ));
            }
        }
    }
    Ok(())
}

/// 32-bit check: the f32 analytic gradient against the true derivative at
/// the same parameter point, evaluated via f64 central differences.
pub fn check_f32(kind: CaseKind, seed: u64) -> Result<(), String> {
    let inputs = case_inputs(seed);
    let model = Model::<f32>::init(cfg(detector_for(kind)), seed).unwrap();
    let grads = analytic_grads(kind, &inputs, &model);
    let model64 = model.cast::<f64>();
    let h = 1e-5;
    let mut rng = rng_for(seed, &format!("probe32/{kind:?}"));
    for (name, grad) in &grads {
        for i in sample_indices(grad.len(), 3, &mut rng) {
            let mut plus = model64.clone();
            plus.params.nudge(name, i, h);
            let mut minus = model64.clone();
            minus.params.nudge(name, i, -h);
            let fd = (loss_value(kind, &inputs, &plus) - loss_value(kind, &inputs, &minus))
                / (2.0 * h);
            let ad = grad[i] as f64;
            let err = (ad - fd).abs();
            let tol = 1e-3 * ad.abs().max(fd.abs()) + 1e-4;
            if err > tol {
                return Err(format!(
                    "{kind:?} f32 {name}[{i}]: ad={ad:.8e} fd={fd:.8e} err={err:.3e}"
                ));
            }
        }
    }
    Ok(())
}

/// Runs one case over all seeds at both precisions.
pub fn run_case(kind: CaseKind) -> Result<(), String> {
    for seed in 0..SEEDS {
        check_f64(kind, seed)?;
        check_f32(kind, seed)?;
    }
    Ok(())
}

/// Runs every case; the acceptance suite's criterion-2 entry point.
pub fn run_all_cases() -> Result<(), String> {
    for kind in ALL_CASES {
        run_case(kind)?;
    }
    Ok(())
}

//! Training objectives: transducer negative log-likelihood, detector
//! cross-entropy, and their weighted combination.

use crate::detector::{EdDecision, EdLabels};
use crate::error::{CoreError, Result};
use crate::model::graph::{utterance_forward, Graph};
use crate::scalar::{fl, Scalar};
use crate::tape::{Tape, Tid};
use crate::tensor::Tensor;

pub const DEFAULT_LAMBDA1: f64 = 0.4;

/// The combined objective for one utterance or batch.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct JointLossReport {
    pub l_transducer: f64,
    pub l_bias: f64,
    pub lambda1: f64,
    pub l_total: f64,
}

/// Weighted sum of the two losses.
pub fn joint_loss(l_transducer: f64, l_bias: f64, lambda1: f64) -> JointLossReport {
    JointLossReport { l_transducer, l_bias, lambda1, l_total: l_transducer + lambda1 * l_bias }
}

/// Transducer loss over a full lattice of joint logits, shaped
/// T x (U+1) x (V+1) with blank last. Returns the loss and its gradient
/// with respect to the logits.
pub fn transducer_loss<F: Scalar>(
    lattice: &Tensor<F>,
    targets: &[usize],
    t_len: usize,
) -> Result<(F, Tensor<F>)> {
    lattice.ensure_finite("transducer lattice logits")?;
    let v1 = lattice.cols();
    if v1 < 2 {
        return Err(CoreError::Shape("lattice needs at least two classes".into()));
    }
    let u1 = targets.len() + 1;
    if lattice.rows() != t_len * u1 {
        return Err(CoreError::Shape(format!(
            "lattice has {} rows, expected T*(U+1) = {}",
            lattice.rows(),
            t_len * u1
        )));
    }
    for &t in targets {
        if t >= v1 - 1 {
            return Err(CoreError::InvalidArgument(
                "targets must not contain blank or out-of-range labels".into(),
            ));
        }
    }
    let mut tape = Tape::new();
    let logits = tape.leaf(lattice.rows(), v1, lattice.data().to_vec());
    let loss = tape.rnnt_loss(logits, targets.to_vec(), t_len);
    tape.backward(loss)?;
    let grad = Tensor::new(lattice.shape().to_vec(), tape.grad(logits).unwrap().to_vec())?;
    Ok((tape.scalar_value(loss), grad))
}

/// Mean per-token cross-entropy of detector logits against binary labels.
pub fn bias_ce_loss<F: Scalar>(decision: &EdDecision<F>, labels: &EdLabels) -> Result<F> {
    if decision.len() != labels.len() {
        return Err(CoreError::Shape(format!(
            "detector produced {} decisions for {} labels",
            decision.len(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Ok(F::zero());
    }
    let mut total = F::zero();
    for (l, &lab) in decision.logits.iter().zip(labels) {
        let target = usize::from(lab);
        let mx = if l[0] > l[1] { l[0] } else { l[1] };
        let lse = mx + ((l[0] - mx).exp() + (l[1] - mx).exp()).ln();
        total = total - (l[target] - lse);
    }
    Ok(total / fl::<F>(labels.len() as f64))
}

/// Scalar tape outputs of one utterance's loss graph.
pub struct UtteranceLoss {
    pub total: Tid,
    pub report: JointLossReport,
}

/// Builds the full teacher-forced loss graph for one utterance on `g`'s
/// tape: transducer loss over the joint lattice, plus (when the model has a
/// detector and lambda1 > 0) the detector cross-entropy.
pub fn utterance_loss<F: Scalar>(
    g: &mut Graph<'_, F>,
    frames: &Tensor<F>,
    targets: &[usize],
    phrases: &[Vec<usize>],
    labels: &EdLabels,
    lambda1: f64,
) -> Result<UtteranceLoss> {
    if frames.rows() == 0 {
        return Err(CoreError::InvalidArgument("empty frame sequence".into()));
    }
    for &t in targets {
        if t >= g.cfg.vocab {
            return Err(CoreError::TokenOutOfRange { id: t, vocab: g.cfg.vocab });
        }
    }
    let fwd = utterance_forward(g, frames, targets, phrases);
    let t_len = frames.rows();
    let l_trans = g.tape.rnnt_loss(fwd.lattice_logits, targets.to_vec(), t_len);
    let l_trans_val = g.tape.scalar_value(l_trans).to_f64_lossy();
    if !l_trans_val.is_finite() {
        return Err(CoreError::NonFinite("transducer loss"));
    }

    let (total, l_bias_val) = match fwd.detector_logits {
        Some(det) if lambda1 != 0.0 => {
            if labels.len() != targets.len() {
                return Err(CoreError::Shape(format!(
                    "{} labels for {} targets",
                    labels.len(),
                    targets.len()
                )));
            }
            let t_idx: Vec<usize> = labels.iter().map(|&b| usize::from(b)).collect();
            let l_bias = g.tape.mean_ce_rows(det, t_idx);
            let l_bias_val = g.tape.scalar_value(l_bias).to_f64_lossy();
            let scaled = g.tape.scale(l_bias, fl(lambda1));
            (g.tape.add(l_trans, scaled), l_bias_val)
        }
        _ => (l_trans, 0.0),
    };
    Ok(UtteranceLoss { total, report: joint_loss(l_trans_val, l_bias_val, lambda1) })
}

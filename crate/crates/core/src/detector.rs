//! Per-token entity detection: ground-truth label construction and the two
//! detector variants (predictor-based, attending over context embeddings;
//! encoder-predictor-based, attending over biased encoder frames).

use crate::error::{CoreError, Result};
use crate::model::context::{ContextEmbeddings, ContextPhrase};
use crate::model::infer::{detector_logits_row, ed_decide, DetectorKeys};
use crate::model::Model;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Per-token binary labels: true iff the token lies inside an occurrence of
/// some list phrase in the reference.
pub type EdLabels = Vec<bool>;

/// Detector output: two-class logits per token and the hard gate derived
/// from them (argmax, ties towards biasing on).
#[derive(Debug, Clone)]
pub struct EdDecision<F: Scalar> {
    pub logits: Vec<[F; 2]>,
    pub gates: Vec<bool>,
}

impl<F: Scalar> EdDecision<F> {
    pub fn from_logits(logits: Vec<[F; 2]>) -> Self {
        let gates = logits.iter().map(|&l| ed_decide(l)).collect();
        EdDecision { logits, gates }
    }

    pub fn len(&self) -> usize {
        self.logits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logits.is_empty()
    }
}

/// Marks every token covered by a contiguous exact match of any phrase.
/// Overlapping matches union their coverage.
pub fn make_ed_labels(reference: &[usize], phrases: &[ContextPhrase]) -> EdLabels {
    let mut labels = vec![false; reference.len()];
    for phrase in phrases {
        if phrase.is_empty() || phrase.len() > reference.len() {
            continue;
        }
        for start in 0..=(reference.len() - phrase.len()) {
            if &reference[start..start + phrase.len()] == phrase.as_slice() {
                for l in labels[start..start + phrase.len()].iter_mut() {
                    *l = true;
                }
            }
        }
    }
    labels
}

/// Predictor-based detection: one decision per row of `queries` (combined
/// predictor outputs), attending over the context matrix. Each row depends
/// only on its own query, so the decision sequence is causal by
/// construction.
pub fn ped_forward<F: Scalar>(
    m: &Model<F>,
    queries: &Tensor<F>,
    ctx: &ContextEmbeddings<F>,
) -> Result<EdDecision<F>> {
    if queries.rows() == 0 {
        return Err(CoreError::InvalidArgument("detector needs at least one query row".into()));
    }
    if queries.cols() != m.cfg.model_dim {
        return Err(CoreError::Shape(format!(
            "detector query width {} != model dim {}",
            queries.cols(),
            m.cfg.model_dim
        )));
    }
    let keys = DetectorKeys::from_context(m, ctx);
    let mut logits = Vec::with_capacity(queries.rows());
    for r in 0..queries.rows() {
        logits.push(detector_logits_row(m, &keys, queries.row(r))?);
    }
    Ok(EdDecision::from_logits(logits))
}

/// Encoder-predictor detection: queries are biased predictor rows, keys and
/// values are the biased encoder rows available so far.
pub fn eped_forward<F: Scalar>(
    m: &Model<F>,
    queries: &Tensor<F>,
    enc_biased: &Tensor<F>,
) -> Result<EdDecision<F>> {
    if enc_biased.rows() == 0 {
        return Err(CoreError::InvalidArgument(
            "encoder-predictor detector needs at least one frame".into(),
        ));
    }
    if queries.cols() != m.cfg.model_dim || enc_biased.cols() != m.cfg.model_dim {
        return Err(CoreError::Shape("detector input width mismatch".into()));
    }
    let mut keys = DetectorKeys::empty();
    for r in 0..enc_biased.rows() {
        keys.push(m, enc_biased.row(r));
    }
    let mut logits = Vec::with_capacity(queries.rows());
    for r in 0..queries.rows() {
        logits.push(detector_logits_row(m, &keys, queries.row(r))?);
    }
    Ok(EdDecision::from_logits(logits))
}

//! Context phrase encoding (frozen path) and phrase list I/O.

use crate::error::{CoreError, Result};
use crate::kernels;
use crate::model::Model;
use crate::ops::{lstm_step, LstmParams, LstmState};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use std::path::Path;

/// A contextual phrase: a nonempty sequence of vocabulary token ids.
pub type ContextPhrase = Vec<usize>;

/// Encoded context list: row 0 is the learned no-bias embedding, rows 1..=K
/// are the phrase embeddings in input order.
#[derive(Debug, Clone)]
pub struct ContextEmbeddings<F: Scalar> {
    pub mat: Tensor<F>,
    pub phrases: Vec<ContextPhrase>,
}

impl<F: Scalar> ContextEmbeddings<F> {
    pub fn num_phrases(&self) -> usize {
        self.phrases.len()
    }
}

fn lstm_params<'a, F: Scalar>(m: &'a Model<F>, prefix: &str) -> LstmParams<'a, F> {
    LstmParams {
        w_ih: m.params.value(&format!("{prefix}.w_ih")).data(),
        b_ih: m.params.value(&format!("{prefix}.b_ih")).data(),
        w_hh: m.params.value(&format!("{prefix}.w_hh")).data(),
        b_hh: m.params.value(&format!("{prefix}.b_hh")).data(),
    }
}

/// Encodes one phrase: embedding lookup (the table is shared with the
/// prediction network), BLSTM, projection of the concatenated final
/// forward/backward states.
fn encode_phrase<F: Scalar>(m: &Model<F>, phrase: &[usize]) -> Result<Vec<F>> {
    let d = m.cfg.model_dim;
    let ch = m.cfg.ctx_hidden;
    let table = m.params.value("pred.embed");
    let fwd = lstm_params(m, "ctx.fwd");
    let bwd = lstm_params(m, "ctx.bwd");

    let mut sf = LstmState::zeros(ch);
    for &tok in phrase {
        sf = lstm_step(&table.data()[tok * d..(tok + 1) * d], &sf, &fwd)?;
    }
    let mut sb = LstmState::zeros(ch);
    for &tok in phrase.iter().rev() {
        sb = lstm_step(&table.data()[tok * d..(tok + 1) * d], &sb, &bwd)?;
    }
    let mut cat = sf.h;
    cat.extend_from_slice(&sb.h);
    let mut out = vec![F::zero(); d];
    kernels::linear_row(
        &cat,
        m.params.value("ctx.proj.w").data(),
        Some(m.params.value("ctx.proj.b").data()),
        &mut out,
    );
    Ok(out)
}

/// Validates and deduplicates a phrase list. Duplicates are dropped with a
/// warning; empty phrases and out-of-range tokens are errors.
pub fn prepare_phrases(phrases: &[ContextPhrase], vocab: usize) -> Result<Vec<ContextPhrase>> {
    let mut seen: Vec<&ContextPhrase> = Vec::new();
    let mut out = Vec::with_capacity(phrases.len());
    for p in phrases {
        if p.is_empty() {
            return Err(CoreError::InvalidArgument("empty context phrase".into()));
        }
        for &tok in p {
            if tok >= vocab {
                return Err(CoreError::TokenOutOfRange { id: tok, vocab });
            }
        }
        if seen.contains(&p) {
            log::warn!("duplicate context phrase {:?} dropped", p);
            continue;
        }
        seen.push(p);
        out.push(p.clone());
    }
    Ok(out)
}

/// Maps a phrase list to its embedding matrix. The no-bias row (index 0) is
/// a function of the parameters only; K = 0 yields the one-row matrix.
pub fn encode_context<F: Scalar>(
    m: &Model<F>,
    phrases: &[ContextPhrase],
) -> Result<ContextEmbeddings<F>> {
    let phrases = prepare_phrases(phrases, m.cfg.vocab)?;
    let d = m.cfg.model_dim;
    let mut data = Vec::with_capacity((phrases.len() + 1) * d);
    data.extend_from_slice(m.params.value("ctx.null").data());
    for p in &phrases {
        data.extend_from_slice(&encode_phrase(m, p)?);
    }
    Ok(ContextEmbeddings { mat: Tensor::matrix(phrases.len() + 1, d, data)?, phrases })
}

/// Reads a phrase list: one phrase per line, token ids space-separated.
/// Blank lines are skipped.
pub fn read_phrase_file(path: &Path) -> Result<Vec<ContextPhrase>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut phrase = Vec::new();
        for tok in line.split_whitespace() {
            let id: usize = tok.parse().map_err(|_| {
                CoreError::Dataset(format!("{}:{}: bad token id {tok:?}", path.display(), ln + 1))
            })?;
            phrase.push(id);
        }
        out.push(phrase);
    }
    Ok(out)
}

pub fn write_phrase_file(path: &Path, phrases: &[ContextPhrase]) -> Result<()> {
    let mut text = String::new();
    for p in phrases {
        let toks: Vec<String> = p.iter().map(|t| t.to_string()).collect();
        text.push_str(&toks.join(" "));
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

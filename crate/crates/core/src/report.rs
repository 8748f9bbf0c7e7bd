//! Evaluation grids and benchmark reports.

use crate::decode::{decode_greedy, DecodeMode, DecodeOptions, OpCounters};
use crate::detector::make_ed_labels;
use crate::error::Result;
use crate::metrics::{edit_distance, RtfReport};
use crate::model::Model;
use crate::synth::{build_bias_list, Corpus, ListMode, Utterance};
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct EvalCell {
    pub mode: String,
    pub n: usize,
    pub set: String,
    pub utterances: usize,
    pub wer: f64,
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
    pub reference_length: usize,
    pub l_cer: f64,
    pub counters: OpCounters,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub seed: u64,
    pub cells: Vec<EvalCell>,
}

fn set_name(mode: ListMode) -> &'static str {
    match mode {
        ListMode::Personalized => "personalized",
        ListMode::Common => "common",
    }
}

fn utterances_for(corpus: &Corpus, set: ListMode) -> &[Utterance] {
    match set {
        ListMode::Personalized => &corpus.test_personalized,
        ListMode::Common => &corpus.test_common,
    }
}

/// Pooled statistics of one decoded utterance set.
#[derive(Debug, Clone, Serialize)]
pub struct SetStats {
    pub utterances: usize,
    pub wer: f64,
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
    pub reference_length: usize,
    pub l_cer: f64,
    pub counters: OpCounters,
}

/// Decodes a set of utterances with per-utterance bias lists: pooled WER,
/// pooled biased-label error rate (reference labels against the decode gate
/// trace), and summed op counters.
pub fn decode_set(
    model: &Model<f32>,
    utts: &[Utterance],
    lists: &[Vec<crate::model::context::ContextPhrase>],
    mode: DecodeMode,
    opts: &DecodeOptions,
) -> Result<SetStats> {
    let mut counters = OpCounters::default();
    let mut s = 0usize;
    let mut ins = 0usize;
    let mut del = 0usize;
    let mut ref_len = 0usize;
    let mut lcer_num = 0usize;
    let mut lcer_den = 0usize;
    for (utt, list) in utts.iter().zip(lists) {
        let hyp = decode_greedy(model, &utt.frames, list, mode, opts)?;
        let e = edit_distance(&utt.tokens, &hyp.tokens);
        s += e.substitutions;
        ins += e.insertions;
        del += e.deletions;
        ref_len += utt.tokens.len();
        let ref_labels = make_ed_labels(&utt.tokens, list);
        lcer_num += edit_distance(&ref_labels, &hyp.gate_trace).distance;
        lcer_den += ref_labels.len().max(hyp.gate_trace.len());
        counters.add(&hyp.counters);
    }
    Ok(SetStats {
        utterances: utts.len(),
        wer: (s + ins + del) as f64 / ref_len.max(1) as f64,
        substitutions: s,
        insertions: ins,
        deletions: del,
        reference_length: ref_len,
        l_cer: if lcer_den == 0 { 0.0 } else { lcer_num as f64 / lcer_den as f64 },
        counters,
    })
}

pub fn build_lists(
    corpus: &Corpus,
    set: ListMode,
    n: usize,
    seed: u64,
) -> Result<Vec<Vec<crate::model::context::ContextPhrase>>> {
    utterances_for(corpus, set)
        .iter()
        .map(|u| build_bias_list(corpus, u, set, n, seed))
        .collect()
}

/// Decodes one (mode, N, set) cell over its test split.
pub fn eval_cell(
    model: &Model<f32>,
    corpus: &Corpus,
    mode: DecodeMode,
    n: usize,
    set: ListMode,
    seed: u64,
    opts: &DecodeOptions,
) -> Result<EvalCell> {
    let utts = utterances_for(corpus, set);
    let lists = build_lists(corpus, set, n, seed)?;
    let stats = decode_set(model, utts, &lists, mode, opts)?;
    Ok(EvalCell {
        mode: mode.name().to_string(),
        n,
        set: set_name(set).to_string(),
        utterances: stats.utterances,
        wer: stats.wer,
        substitutions: stats.substitutions,
        insertions: stats.insertions,
        deletions: stats.deletions,
        reference_length: stats.reference_length,
        l_cer: stats.l_cer,
        counters: stats.counters,
    })
}

/// Full grid over modes x list sizes x {personalized, common}.
pub fn evaluate_grid(
    model: &Model<f32>,
    corpus: &Corpus,
    modes: &[DecodeMode],
    ns: &[usize],
    seed: u64,
    opts: &DecodeOptions,
) -> Result<EvalReport> {
    let mut cells = Vec::new();
    for &mode in modes {
        for &n in ns {
            for set in [ListMode::Personalized, ListMode::Common] {
                cells.push(eval_cell(model, corpus, mode, n, set, seed, opts)?);
            }
        }
    }
    Ok(EvalReport { seed, cells })
}

pub fn eval_table(report: &EvalReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<14} {:>4} {:<12} {:>8} {:>8} {:>10} {:>10} {:>10}\n",
        "mode", "N", "set", "wer", "l-cer", "enc-full", "pred-full", "detector"
    ));
    for c in &report.cells {
        out.push_str(&format!(
            "{:<14} {:>4} {:<12} {:>8.4} {:>8.4} {:>10} {:>10} {:>10}\n",
            c.mode,
            c.n,
            c.set,
            c.wer,
            c.l_cer,
            c.counters.enc_bias_full,
            c.counters.pred_bias_full,
            c.counters.detector_calls
        ));
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchCell {
    pub mode: String,
    pub n: usize,
    pub set: String,
    pub repeats: usize,
    pub rtf: RtfReport,
    pub counters: OpCounters,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub seed: u64,
    pub cells: Vec<BenchCell>,
}

/// Times repeated single-threaded decodes of one cell; reports the minimum
/// wall-clock run and the (repeat-invariant) counters.
pub fn bench_cell(
    model: &Model<f32>,
    corpus: &Corpus,
    mode: DecodeMode,
    n: usize,
    set: ListMode,
    seed: u64,
    opts: &DecodeOptions,
    repeats: usize,
) -> Result<BenchCell> {
    let utts = utterances_for(corpus, set);
    let mut lists = Vec::with_capacity(utts.len());
    let mut audio_seconds = 0.0;
    for utt in utts {
        lists.push(build_bias_list(corpus, utt, set, n, seed)?);
        audio_seconds += utt.frames.audio_seconds();
    }

    let mut best: Option<f64> = None;
    let mut counters = OpCounters::default();
    for rep in 0..repeats.max(1) {
        let mut rep_counters = OpCounters::default();
        let start = std::time::Instant::now();
        for (utt, list) in utts.iter().zip(&lists) {
            let hyp = decode_greedy(model, &utt.frames, list, mode, opts)?;
            rep_counters.add(&hyp.counters);
        }
        let secs = start.elapsed().as_secs_f64();
        if rep == 0 {
            counters = rep_counters;
        } else {
            debug_assert_eq!(counters, rep_counters, "counters must not vary across repeats");
        }
        best = Some(best.map_or(secs, |b: f64| b.min(secs)));
    }
    Ok(BenchCell {
        mode: mode.name().to_string(),
        n,
        set: set_name(set).to_string(),
        repeats: repeats.max(1),
        rtf: RtfReport::new(best.unwrap(), audio_seconds)?,
        counters,
    })
}

pub fn bench_table(report: &BenchReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<14} {:>4} {:<12} {:>9} {:>9} {:>10} {:>12}\n",
        "mode", "N", "set", "rtf", "audio-s", "enc-full", "total-ops"
    ));
    for c in &report.cells {
        out.push_str(&format!(
            "{:<14} {:>4} {:<12} {:>9.4} {:>9.2} {:>10} {:>12}\n",
            c.mode,
            c.n,
            c.set,
            c.rtf.rtf,
            c.rtf.audio_seconds,
            c.counters.enc_bias_full,
            c.counters.total()
        ));
    }
    out
}

//! Evaluation metrics: Levenshtein alignment with a reproducible
//! substitution/deletion/insertion split, pooled corpus error rates, the
//! biased-label error rate, and real-time-factor measurement.

use crate::error::{CoreError, Result};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct EditStats {
    pub distance: usize,
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
}

/// Unit-cost Levenshtein distance via DP. Ties during backtrace prefer
/// substitutions, then deletions, then insertions, so the S/I/D split is
/// reproducible.
pub fn edit_distance<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> EditStats {
    let n = reference.len();
    let m = hypothesis.len();
    let mut dp = vec![0usize; (n + 1) * (m + 1)];
    let idx = |i: usize, j: usize| i * (m + 1) + j;
    for i in 0..=n {
        dp[idx(i, 0)] = i;
    }
    for j in 0..=m {
        dp[idx(0, j)] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = dp[idx(i - 1, j - 1)]
                + usize::from(reference[i - 1] != hypothesis[j - 1]);
            let del = dp[idx(i - 1, j)] + 1;
            let ins = dp[idx(i, j - 1)] + 1;
            dp[idx(i, j)] = sub.min(del).min(ins);
        }
    }

    // Backtrace with the fixed preference order.
    let (mut i, mut j) = (n, m);
    let (mut s, mut ins, mut del) = (0usize, 0usize, 0usize);
    while i > 0 || j > 0 {
        if i > 0 && j > 0 {
            let cost = usize::from(reference[i - 1] != hypothesis[j - 1]);
            if dp[idx(i, j)] == dp[idx(i - 1, j - 1)] + cost {
                if cost == 1 {
                    s += 1;
                }
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && dp[idx(i, j)] == dp[idx(i - 1, j)] + 1 {
            del += 1;
            i -= 1;
            continue;
        }
        ins += 1;
        j -= 1;
    }
    EditStats { distance: dp[idx(n, m)], substitutions: s, insertions: ins, deletions: del }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorRateReport {
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
    pub reference_length: usize,
    pub rate: f64,
}

/// Pooled corpus error rate: total edits over total reference length
/// (not the mean of per-utterance rates).
pub fn corpus_error_rate<T: PartialEq>(pairs: &[(Vec<T>, Vec<T>)]) -> Result<ErrorRateReport> {
    if pairs.is_empty() {
        return Err(CoreError::InvalidArgument("empty evaluation pair list".into()));
    }
    let mut s = 0;
    let mut i = 0;
    let mut d = 0;
    let mut ref_len = 0;
    for (r, h) in pairs {
        let e = edit_distance(r, h);
        s += e.substitutions;
        i += e.insertions;
        d += e.deletions;
        ref_len += r.len();
    }
    if ref_len == 0 {
        return Err(CoreError::InvalidArgument("zero total reference length".into()));
    }
    Ok(ErrorRateReport {
        substitutions: s,
        insertions: i,
        deletions: d,
        reference_length: ref_len,
        rate: (s + i + d) as f64 / ref_len as f64,
    })
}

/// Biased-label error rate: edit distance between the reference and
/// predicted per-token label strings over the longer length. Both empty is
/// 0 by convention.
pub fn l_cer(ref_labels: &[bool], hyp_labels: &[bool]) -> f64 {
    let denom = ref_labels.len().max(hyp_labels.len());
    if denom == 0 {
        return 0.0;
    }
    edit_distance(ref_labels, hyp_labels).distance as f64 / denom as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RtfReport {
    pub decode_seconds: f64,
    pub audio_seconds: f64,
    pub rtf: f64,
}

impl RtfReport {
    pub fn new(decode_seconds: f64, audio_seconds: f64) -> Result<Self> {
        if audio_seconds <= 0.0 {
            return Err(CoreError::InvalidArgument("zero audio duration".into()));
        }
        Ok(RtfReport { decode_seconds, audio_seconds, rtf: decode_seconds / audio_seconds })
    }
}

/// Times `decode_all` (which must process every utterance single-threaded)
/// against the total audio duration.
pub fn measure_rtf<Fn1: FnMut()>(mut decode_all: Fn1, audio_seconds: f64) -> Result<RtfReport> {
    let start = std::time::Instant::now();
    decode_all();
    RtfReport::new(start.elapsed().as_secs_f64(), audio_seconds)
}

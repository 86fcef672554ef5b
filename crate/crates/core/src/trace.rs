//! Evaluation instances and their per-segment block decomposition.
//!
//! A [`Trace`] is the raw record of one instance: the source segment
//! durations, the tokens the system emitted, and the reference length. It
//! becomes usable for scoring only after [`validate_trace`] turns it into a
//! [`ValidTrace`], which also fixes which segment each token belongs to.
//!
//! All times are milliseconds.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack allowed when matching a token's CU delay to a segment boundary.
/// Logged delays are rounded to whole or fractional milliseconds.
pub const PREFIX_SUM_TOLERANCE_MS: f64 = 0.5;

/// One raw audio segment of the source stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SourceSegment {
    duration_ms: f64,
}

impl SourceSegment {
    pub fn new(duration_ms: f64) -> Result<Self> {
        if !(duration_ms.is_finite() && duration_ms > 0.0) {
            return Err(Error::malformed(format!(
                "segment duration must be positive, got {duration_ms}"
            )));
        }
        Ok(Self { duration_ms })
    }

    pub fn duration_ms(&self) -> f64 {
        self.duration_ms
    }
}

/// A target token together with the two timestamps logged for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenEvent {
    /// 1-based position in the hypothesis.
    pub index: usize,
    pub text: Option<String>,
    /// Source audio consumed when the token was written.
    pub cu_delay_ms: f64,
    /// Cumulative pure computation time spent up to and including this token.
    pub computation_ts_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub id: String,
    pub segments: Vec<SourceSegment>,
    pub tokens: Vec<TokenEvent>,
    /// Number of reference tokens, `|Y*|`.
    pub reference_length: usize,
}

impl Trace {
    /// Builds a trace from plain duration and token vectors; tokens are
    /// numbered from 1 in the given order.
    pub fn from_parts(
        id: impl Into<String>,
        segment_durations_ms: &[f64],
        tokens: &[(f64, f64)],
        reference_length: usize,
    ) -> Result<Self> {
        let segments = segment_durations_ms
            .iter()
            .map(|&d| SourceSegment::new(d))
            .collect::<Result<Vec<_>>>()?;
        let tokens = tokens
            .iter()
            .enumerate()
            .map(|(i, &(cu_delay_ms, computation_ts_ms))| TokenEvent {
                index: i + 1,
                text: None,
                cu_delay_ms,
                computation_ts_ms,
            })
            .collect();
        Ok(Self {
            id: id.into(),
            segments,
            tokens,
            reference_length,
        })
    }

    pub fn total_source_ms(&self) -> f64 {
        self.segments.iter().map(SourceSegment::duration_ms).sum()
    }

    pub fn validate(self) -> Result<ValidTrace> {
        validate_trace(self)
    }
}

/// A trace whose invariants have been checked.
///
/// Besides the trace itself it caches the segment arrival times (prefix sums
/// of the durations) and the 0-based segment each token was emitted under.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidTrace {
    trace: Trace,
    arrivals_ms: Vec<f64>,
    token_segment: Vec<usize>,
}

impl ValidTrace {
    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn into_inner(self) -> Trace {
        self.trace
    }

    /// Renames the instance; the id takes no part in validation.
    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.trace.id = id.into();
        self
    }

    /// `arrivals_ms()[j]` is the cumulative source duration through segment `j`.
    pub fn arrivals_ms(&self) -> &[f64] {
        &self.arrivals_ms
    }

    /// 0-based segment index for each token.
    pub fn token_segments(&self) -> &[usize] {
        &self.token_segment
    }

    pub fn total_ms(&self) -> f64 {
        *self
            .arrivals_ms
            .last()
            .expect("validated traces have segments")
    }

    /// Computation timestamp of the token with 1-based `index`, where index 0
    /// stands for the instance start (`C_0 = 0`).
    pub fn computation_at(&self, index: usize) -> f64 {
        match index {
            0 => 0.0,
            i => self.trace.tokens[i - 1].computation_ts_ms,
        }
    }

    pub fn last_computation_ms(&self) -> f64 {
        self.computation_at(self.trace.tokens.len())
    }
}

impl Deref for ValidTrace {
    type Target = Trace;

    fn deref(&self) -> &Trace {
        &self.trace
    }
}

/// Prefix sums `A_j` of the segment durations, summed left to right.
pub(crate) fn arrival_times(segments: &[SourceSegment]) -> Vec<f64> {
    segments
        .iter()
        .scan(0.0, |acc, s| {
            *acc += s.duration_ms();
            Some(*acc)
        })
        .collect()
}

/// Index of the boundary closest to `value`, if it is within tolerance.
fn match_boundary(arrivals: &[f64], value: f64) -> Option<usize> {
    let pos = arrivals.partition_point(|&a| a < value);
    [pos.checked_sub(1), Some(pos)]
        .into_iter()
        .flatten()
        .filter(|&j| j < arrivals.len())
        .min_by(|&a, &b| {
            (arrivals[a] - value)
                .abs()
                .total_cmp(&(arrivals[b] - value).abs())
        })
        .filter(|&j| (arrivals[j] - value).abs() <= PREFIX_SUM_TOLERANCE_MS)
}

/// Checks every trace invariant and fixes each token's segment.
pub fn validate_trace(trace: Trace) -> Result<ValidTrace> {
    if trace.segments.is_empty() {
        return Err(Error::malformed("trace has no source segments"));
    }
    for (j, seg) in trace.segments.iter().enumerate() {
        if !(seg.duration_ms.is_finite() && seg.duration_ms > 0.0) {
            return Err(Error::malformed(format!(
                "segment {} has nonpositive duration {}",
                j + 1,
                seg.duration_ms
            )));
        }
    }
    if trace.reference_length == 0 {
        return Err(Error::malformed("reference length must be positive"));
    }

    let arrivals = arrival_times(&trace.segments);
    let mut token_segment = Vec::with_capacity(trace.tokens.len());
    let mut prev_cu = f64::NEG_INFINITY;
    let mut prev_c = 0.0;
    for (pos, tok) in trace.tokens.iter().enumerate() {
        if tok.index != pos + 1 {
            return Err(Error::malformed(format!(
                "token at position {} has index {}",
                pos + 1,
                tok.index
            )));
        }
        if !(tok.cu_delay_ms.is_finite() && tok.cu_delay_ms >= 0.0) {
            return Err(Error::malformed(format!(
                "token {} has invalid CU delay {}",
                tok.index, tok.cu_delay_ms
            )));
        }
        if !(tok.computation_ts_ms.is_finite() && tok.computation_ts_ms >= 0.0) {
            return Err(Error::malformed(format!(
                "token {} has invalid computation timestamp {}",
                tok.index, tok.computation_ts_ms
            )));
        }
        if tok.cu_delay_ms < prev_cu {
            return Err(Error::malformed(format!(
                "CU delay decreases at token {}",
                tok.index
            )));
        }
        if tok.computation_ts_ms < prev_c {
            return Err(Error::malformed(format!(
                "computation timestamp decreases at token {} ({} < {})",
                tok.index, tok.computation_ts_ms, prev_c
            )));
        }
        let seg = match_boundary(&arrivals, tok.cu_delay_ms).ok_or_else(|| {
            Error::malformed(format!(
                "token {} CU delay {} is not a prefix sum of segment durations",
                tok.index, tok.cu_delay_ms
            ))
        })?;
        if token_segment.last().is_some_and(|&last| seg < last) {
            return Err(Error::malformed(format!(
                "token {} maps to an earlier segment than its predecessor",
                tok.index
            )));
        }
        token_segment.push(seg);
        prev_cu = tok.cu_delay_ms;
        prev_c = tok.computation_ts_ms;
    }

    Ok(ValidTrace {
        trace,
        arrivals_ms: arrivals,
        token_segment,
    })
}

/// Per-segment decomposition of a trace.
///
/// Vectors are indexed by 0-based segment; `tau[j]` is the 1-based index of
/// the last token written before segment `j` was read (0 if none).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockStructure {
    pub tau: Vec<usize>,
    /// Computation spent on the tokens written while segment `j` was the
    /// latest one read: `C[tau[j+1]] - C[tau[j]]`, with `tau` past the end
    /// equal to the token count.
    pub block_inference_ms: Vec<f64>,
    pub buffers_ms: Vec<f64>,
}

pub fn derive_blocks(trace: &ValidTrace) -> BlockStructure {
    let segments = trace.segments.len();
    let token_count = trace.tokens.len();

    // tau[j] = number of tokens emitted under segments before j.
    let mut tau = vec![0usize; segments];
    let mut emitted = 0;
    let mut iter = trace.token_segments().iter().peekable();
    for (j, slot) in tau.iter_mut().enumerate() {
        while iter.next_if(|&&seg| seg < j).is_some() {
            emitted += 1;
        }
        *slot = emitted;
    }

    let block_inference_ms: Vec<f64> = (0..segments)
        .map(|j| {
            let next = tau.get(j + 1).copied().unwrap_or(token_count);
            trace.computation_at(next) - trace.computation_at(tau[j])
        })
        .collect();

    let durations: Vec<f64> = trace.segments.iter().map(|s| s.duration_ms()).collect();
    let buffers_ms = crate::delay::buffer_recursion(&durations, &block_inference_ms);

    BlockStructure {
        tau,
        block_inference_ms,
        buffers_ms,
    }
}

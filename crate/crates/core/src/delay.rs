//! Per-token delays in the three accounting modes.
//!
//! * CU: source audio consumed when the token was written.
//! * CA (legacy): CU plus the cumulative computation timestamp. This treats
//!   reading and writing as if they happened one after the other, so the
//!   computation cost of every earlier step is charged again on top of the
//!   audio that kept arriving meanwhile.
//! * CA*: audio consumed, plus the inference time since the block boundary,
//!   plus whatever generation backlog was carried into the block.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::trace::{derive_blocks, BlockStructure, ValidTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DelayMode {
    #[serde(rename = "CU")]
    Cu,
    #[serde(rename = "CA")]
    Ca,
    #[serde(rename = "CA_STAR")]
    CaStar,
}

impl DelayMode {
    pub const ALL: [DelayMode; 3] = [DelayMode::Cu, DelayMode::Ca, DelayMode::CaStar];

    pub fn as_str(self) -> &'static str {
        match self {
            DelayMode::Cu => "CU",
            DelayMode::Ca => "CA",
            DelayMode::CaStar => "CA_STAR",
        }
    }
}

impl fmt::Display for DelayMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DelayMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "CU" => Ok(DelayMode::Cu),
            "CA" => Ok(DelayMode::Ca),
            "CA_STAR" | "CA*" | "CASTAR" => Ok(DelayMode::CaStar),
            other => Err(format!(
                "unknown delay mode `{other}` (expected CU, CA or CA_STAR)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelaySequence {
    pub mode: DelayMode,
    pub values_ms: Vec<f64>,
    /// Inference time of each token since its block boundary (CA* only).
    pub inference_ms: Option<Vec<f64>>,
}

impl DelaySequence {
    pub fn len(&self) -> usize {
        self.values_ms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values_ms.is_empty()
    }
}

pub fn cu_delays(trace: &ValidTrace) -> DelaySequence {
    DelaySequence {
        mode: DelayMode::Cu,
        values_ms: trace.tokens.iter().map(|t| t.cu_delay_ms).collect(),
        inference_ms: None,
    }
}

pub fn legacy_ca_delays(trace: &ValidTrace) -> DelaySequence {
    DelaySequence {
        mode: DelayMode::Ca,
        values_ms: trace
            .tokens
            .iter()
            .map(|t| t.cu_delay_ms + t.computation_ts_ms)
            .collect(),
        inference_ms: None,
    }
}

/// Backlog recursion over segments: `β_1 = 0` and
/// `β_j = max(0, β_{j-1} + B_{j-1} - T_j)`.
///
/// `B_{j-1}` is the full computation of the previous block, so a block that
/// emitted nothing contributes zero instead of re-counting older inference.
pub(crate) fn buffer_recursion(durations_ms: &[f64], block_inference_ms: &[f64]) -> Vec<f64> {
    debug_assert_eq!(durations_ms.len(), block_inference_ms.len());
    let mut out = Vec::with_capacity(durations_ms.len());
    let mut beta = 0.0;
    for (j, &duration) in durations_ms.iter().enumerate() {
        if j > 0 {
            beta = f64::max(0.0, beta + block_inference_ms[j - 1] - duration);
        }
        out.push(beta);
    }
    out
}

/// Buffers `β_j`, one per segment.
pub fn buffers(trace: &ValidTrace, blocks: &BlockStructure) -> Vec<f64> {
    let durations: Vec<f64> = trace.segments.iter().map(|s| s.duration_ms()).collect();
    buffer_recursion(&durations, &blocks.block_inference_ms)
}

pub fn ca_star_delays(trace: &ValidTrace) -> DelaySequence {
    let blocks = derive_blocks(trace);
    let mut values_ms = Vec::with_capacity(trace.tokens.len());
    let mut inference_ms = Vec::with_capacity(trace.tokens.len());
    for (tok, &seg) in trace.tokens.iter().zip(trace.token_segments()) {
        let boundary = trace.computation_at(blocks.tau[seg]);
        let inference = tok.computation_ts_ms - boundary;
        values_ms.push(blocks.buffers_ms[seg] + inference + tok.cu_delay_ms);
        inference_ms.push(inference);
    }
    DelaySequence {
        mode: DelayMode::CaStar,
        values_ms,
        inference_ms: Some(inference_ms),
    }
}

pub fn delays(trace: &ValidTrace, mode: DelayMode) -> DelaySequence {
    match mode {
        DelayMode::Cu => cu_delays(trace),
        DelayMode::Ca => legacy_ca_delays(trace),
        DelayMode::CaStar => ca_star_delays(trace),
    }
}

//! Logical-time simulation of a streaming read/write loop.
//!
//! Speech arrives on its own clock: segment `j` is fully available at
//! `A_j`, the sum of the durations up to and including it. A single
//! non-preemptive generation worker handles blocks in order. Block `j`
//! starts at `max(A_j, finish of block j-1)` and writes its tokens one after
//! another, each taking its inference cost. Reading never waits for writing.
//!
//! The simulator produces two things: the trace a harness would log (CU
//! delay and cumulative computation per token), and the time each token
//! actually became available. The second is the ground truth CA* is checked
//! against.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::{arrival_times, SourceSegment, TokenEvent, Trace, ValidTrace};

/// Read/write policy driving the simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PolicySpec {
    /// Read `k` segments, write `n` tokens, then write `n` more after every
    /// further segment. `tail_tokens` extra tokens follow the end of the
    /// source and belong to the last segment.
    WaitKStrideN {
        k: usize,
        n: usize,
        tail_tokens: usize,
    },
}

impl PolicySpec {
    pub fn wait_k_stride_n(k: usize, n: usize) -> Self {
        PolicySpec::WaitKStrideN {
            k,
            n,
            tail_tokens: 0,
        }
    }

    /// Tokens written right after each segment is read.
    fn block_sizes(&self, segments: usize) -> Result<Vec<usize>> {
        match *self {
            PolicySpec::WaitKStrideN { k, n, tail_tokens } => {
                if k == 0 || n == 0 {
                    return Err(Error::InvalidPolicy(format!(
                        "k and n must be at least 1 (k={k}, n={n})"
                    )));
                }
                if k > segments {
                    return Err(Error::InvalidPolicy(format!(
                        "wait-{k} needs at least {k} segments, got {segments}"
                    )));
                }
                let mut sizes: Vec<usize> =
                    (1..=segments).map(|j| if j >= k { n } else { 0 }).collect();
                *sizes.last_mut().expect("k >= 1 implies a segment") += tail_tokens;
                Ok(sizes)
            }
        }
    }
}

/// Per-token inference cost model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ComputeModel {
    Constant {
        ms: f64,
    },
    /// One cost per token, in emission order.
    PerToken {
        ms: Vec<f64>,
    },
    /// Independent draws from `[lo_ms, hi_ms)`.
    ///
    /// The generator is ChaCha8 seeded with `seed` through
    /// `SeedableRng::seed_from_u64`. Each draw takes one `next_u64` value
    /// `x` and maps it to `lo + (hi - lo) * (x >> 11) * 2^-53`.
    SeededUniform {
        lo_ms: f64,
        hi_ms: f64,
        seed: u64,
    },
}

impl ComputeModel {
    fn costs(&self, count: usize) -> Result<Vec<f64>> {
        let check = |v: f64| -> Result<f64> {
            if v.is_finite() && v >= 0.0 {
                Ok(v)
            } else {
                Err(Error::InvalidCompute(format!(
                    "inference cost {v} is not a nonnegative number"
                )))
            }
        };
        match self {
            ComputeModel::Constant { ms } => Ok(vec![check(*ms)?; count]),
            ComputeModel::PerToken { ms } => {
                if ms.len() < count {
                    return Err(Error::InvalidCompute(format!(
                        "{} per-token costs given for {count} tokens",
                        ms.len()
                    )));
                }
                ms[..count].iter().map(|&v| check(v)).collect()
            }
            ComputeModel::SeededUniform { lo_ms, hi_ms, seed } => {
                let (lo, hi) = (check(*lo_ms)?, check(*hi_ms)?);
                if lo > hi {
                    return Err(Error::InvalidCompute(format!("empty range [{lo}, {hi})")));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                Ok((0..count)
                    .map(|_| {
                        let unit = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
                        lo + (hi - lo) * unit
                    })
                    .collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOutcome {
    pub trace: ValidTrace,
    /// Wall-clock time each token became available, from speech start.
    pub emission_wall_ms: Vec<f64>,
}

impl SimulationOutcome {
    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.trace = self.trace.with_id(id);
        self
    }
}

pub fn simulate(
    segment_durations_ms: &[f64],
    policy: &PolicySpec,
    compute: &ComputeModel,
) -> Result<SimulationOutcome> {
    let segments = segment_durations_ms
        .iter()
        .map(|&d| SourceSegment::new(d))
        .collect::<Result<Vec<_>>>()?;
    let sizes = policy.block_sizes(segments.len())?;
    let costs = compute.costs(sizes.iter().sum())?;
    let arrivals = arrival_times(&segments);

    let mut tokens = Vec::with_capacity(costs.len());
    let mut emission_wall_ms = Vec::with_capacity(costs.len());
    let mut cost_iter = costs.into_iter();
    let mut worker_free = 0.0f64;
    let mut computation = 0.0f64;
    for (&arrival, &size) in arrivals.iter().zip(&sizes) {
        if size == 0 {
            continue;
        }
        let mut clock = arrival.max(worker_free);
        for _ in 0..size {
            let cost = cost_iter.next().expect("one cost per token");
            clock += cost;
            computation += cost;
            let index = tokens.len() + 1;
            tokens.push(TokenEvent {
                index,
                text: Some(format!("w{index}")),
                cu_delay_ms: arrival,
                computation_ts_ms: computation,
            });
            emission_wall_ms.push(clock);
        }
        worker_free = clock;
    }

    let reference_length = tokens.len().max(1);
    let trace = Trace {
        id: "0".into(),
        segments,
        tokens,
        reference_length,
    }
    .validate()?;
    Ok(SimulationOutcome {
        trace,
        emission_wall_ms,
    })
}

/// Replays the single-worker event model from a logged trace.
///
/// Each block's computation is recovered from differences of `C_i`; the
/// block starts once its segment has arrived and the previous block has
/// finished. Independent of the closed-form CA* computation.
pub fn wall_clock_oracle(trace: &ValidTrace) -> Vec<f64> {
    let arrivals = trace.arrivals_ms();
    let mut out = Vec::with_capacity(trace.tokens.len());
    let mut worker_free = 0.0f64;
    let mut current_block = None;
    let mut block_start = 0.0;
    let mut block_base_c = 0.0;
    let mut prev_c = 0.0;
    for (tok, &seg) in trace.tokens.iter().zip(trace.token_segments()) {
        if current_block != Some(seg) {
            current_block = Some(seg);
            block_start = arrivals[seg].max(worker_free);
            block_base_c = prev_c;
        }
        let emitted = block_start + (tok.computation_ts_ms - block_base_c);
        out.push(emitted);
        worker_free = emitted;
        prev_c = tok.computation_ts_ms;
    }
    out
}

/// Tiles a trace `repeats` times back to back.
///
/// Token `i` of copy `r` keeps its segment (shifted by `r` copies) and has
/// its computation timestamp shifted by `r` times the base's final one.
pub fn concat_scale(base: &ValidTrace, repeats: usize) -> Result<ValidTrace> {
    if repeats == 0 {
        return Err(Error::malformed("repeats must be at least 1"));
    }
    if repeats == 1 {
        return Ok(base.clone());
    }
    let segments: Vec<SourceSegment> = (0..repeats)
        .flat_map(|_| base.segments.iter().copied())
        .collect();
    let arrivals = arrival_times(&segments);
    let seg_count = base.segments.len();
    let c_last = base.last_computation_ms();
    let mut tokens = Vec::with_capacity(base.tokens.len() * repeats);
    for r in 0..repeats {
        for (tok, &seg) in base.tokens.iter().zip(base.token_segments()) {
            tokens.push(TokenEvent {
                index: tokens.len() + 1,
                text: tok.text.clone(),
                cu_delay_ms: arrivals[r * seg_count + seg],
                computation_ts_ms: tok.computation_ts_ms + r as f64 * c_last,
            });
        }
    }
    Trace {
        id: base.id.clone(),
        segments,
        tokens,
        reference_length: base.reference_length * repeats,
    }
    .validate()
}

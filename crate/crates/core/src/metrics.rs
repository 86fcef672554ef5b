//! Average Lagging (AL) and its length-adaptive variant (LAAL).

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::delay::{delays, DelayMode, DelaySequence};
use crate::error::{Error, Result};
use crate::trace::{ValidTrace, PREFIX_SUM_TOLERANCE_MS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MetricVariant {
    #[serde(rename = "AL")]
    Al,
    #[serde(rename = "LAAL")]
    Laal,
}

impl MetricVariant {
    pub const ALL: [MetricVariant; 2] = [MetricVariant::Al, MetricVariant::Laal];
}

impl fmt::Display for MetricVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MetricVariant::Al => "AL",
            MetricVariant::Laal => "LAAL",
        })
    }
}

impl FromStr for MetricVariant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "AL" => Ok(MetricVariant::Al),
            "LAAL" => Ok(MetricVariant::Laal),
            other => Err(format!("unknown metric `{other}` (expected AL or LAAL)")),
        }
    }
}

/// Ideal delays under uniform emission over the whole source.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleDelays {
    pub values_ms: Vec<f64>,
    pub denominator: usize,
}

/// `d*_i = (i - 1) * total / denominator`, where the denominator is the
/// reference length for AL and `max(|Y*|, |Y|)` for LAAL.
pub fn oracle_delays(
    total_ms: f64,
    ref_len: usize,
    hyp_len: usize,
    variant: MetricVariant,
) -> Result<OracleDelays> {
    if ref_len == 0 {
        return Err(Error::DegenerateInstance("reference length is zero".into()));
    }
    if !(total_ms.is_finite() && total_ms > 0.0) {
        return Err(Error::DegenerateInstance(format!(
            "total source duration must be positive, got {total_ms}"
        )));
    }
    let denominator = match variant {
        MetricVariant::Al => ref_len,
        MetricVariant::Laal => ref_len.max(hyp_len),
    };
    let values_ms = (0..hyp_len)
        .map(|i| i as f64 * total_ms / denominator as f64)
        .collect();
    Ok(OracleDelays {
        values_ms,
        denominator,
    })
}

/// 1-based index of the first token whose delay reaches the end of the
/// source, falling back to the last token when none does.
pub fn cutoff_index(delays: &DelaySequence, total_ms: f64) -> Result<usize> {
    if delays.is_empty() {
        return Err(Error::EmptyHypothesis);
    }
    let threshold = total_ms - PREFIX_SUM_TOLERANCE_MS;
    Ok(delays
        .values_ms
        .iter()
        .position(|&d| d >= threshold)
        .map_or(delays.len(), |p| p + 1))
}

/// Mean of `d_i - d*_i` over the first `cutoff` tokens.
///
/// Panics if `cutoff` is zero or exceeds either sequence.
pub fn average_lagging(delays: &DelaySequence, oracle: &OracleDelays, cutoff: usize) -> f64 {
    assert!(
        cutoff >= 1 && cutoff <= delays.len() && cutoff <= oracle.values_ms.len(),
        "cutoff {cutoff} out of range"
    );
    let sum: f64 = delays.values_ms[..cutoff]
        .iter()
        .zip(&oracle.values_ms[..cutoff])
        .map(|(d, o)| d - o)
        .sum();
    sum / cutoff as f64
}

/// Scores of one instance under one delay mode. All fields are `None` when
/// the instance has no tokens.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ModeScores {
    pub al_ms: Option<f64>,
    pub laal_ms: Option<f64>,
    pub cutoff: Option<usize>,
}

impl ModeScores {
    pub fn is_null(&self) -> bool {
        self.al_ms.is_none() && self.laal_ms.is_none()
    }

    pub fn get(&self, variant: MetricVariant) -> Option<f64> {
        match variant {
            MetricVariant::Al => self.al_ms,
            MetricVariant::Laal => self.laal_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub instance_id: String,
    pub modes: BTreeMap<DelayMode, ModeScores>,
    pub token_count: usize,
    pub reference_length: usize,
    pub total_source_ms: f64,
}

impl LatencyReport {
    pub fn is_null(&self) -> bool {
        self.modes.values().all(ModeScores::is_null)
    }
}

fn score_mode(trace: &ValidTrace, seq: &DelaySequence) -> Result<ModeScores> {
    let total = trace.total_ms();
    let cutoff = cutoff_index(seq, total)?;
    let hyp_len = seq.len();
    let al = oracle_delays(total, trace.reference_length, hyp_len, MetricVariant::Al)?;
    let laal = oracle_delays(total, trace.reference_length, hyp_len, MetricVariant::Laal)?;
    Ok(ModeScores {
        al_ms: Some(average_lagging(seq, &al, cutoff)),
        laal_ms: Some(average_lagging(seq, &laal, cutoff)),
        cutoff: Some(cutoff),
    })
}

/// Scores a trace under each requested mode, each with its own cutoff.
pub fn evaluate_instance(trace: &ValidTrace, modes: &[DelayMode]) -> LatencyReport {
    let modes = modes
        .iter()
        .map(|&mode| {
            // A validated trace can only fail here by having no tokens.
            let scores = score_mode(trace, &delays(trace, mode)).unwrap_or_default();
            (mode, scores)
        })
        .collect();
    LatencyReport {
        instance_id: trace.id.clone(),
        modes,
        token_count: trace.tokens.len(),
        reference_length: trace.reference_length,
        total_source_ms: trace.total_ms(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanScores {
    pub al_ms: Option<f64>,
    pub laal_ms: Option<f64>,
    /// Instances contributing to this mode's means.
    pub instances: usize,
}

impl MeanScores {
    pub fn get(&self, variant: MetricVariant) -> Option<f64> {
        match variant {
            MetricVariant::Al => self.al_ms,
            MetricVariant::Laal => self.laal_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusAverage {
    pub modes: BTreeMap<DelayMode, MeanScores>,
    /// Reports with no scorable metric at all.
    pub skipped: usize,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Unweighted per-instance mean, summed in input order.
pub fn corpus_average(reports: &[LatencyReport]) -> Result<CorpusAverage> {
    let skipped = reports.iter().filter(|r| r.is_null()).count();
    if skipped == reports.len() {
        return Err(Error::NoScorableInstances);
    }
    let mut modes = BTreeMap::new();
    for mode in reports.iter().flat_map(|r| r.modes.keys().copied()) {
        if modes.contains_key(&mode) {
            continue;
        }
        let scores: Vec<&ModeScores> = reports
            .iter()
            .filter_map(|r| r.modes.get(&mode))
            .filter(|s| !s.is_null())
            .collect();
        modes.insert(
            mode,
            MeanScores {
                al_ms: mean(scores.iter().filter_map(|s| s.al_ms)),
                laal_ms: mean(scores.iter().filter_map(|s| s.laal_ms)),
                instances: scores.len(),
            },
        );
    }
    Ok(CorpusAverage { modes, skipped })
}

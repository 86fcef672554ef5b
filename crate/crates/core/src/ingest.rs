//! Line-delimited instance logs in the SimulEval `instances.log` layout.
//!
//! Each non-empty line is one JSON object:
//!
//! ```text
//! {"index":0,"prediction":"ein Mississippi ...","delays":[1000.000,...],
//!  "elapsed":[1500.000,...],"computation":[500.000,...],"source_length":3000.000,
//!  "segment_durations":[1000.000,...],"reference":"..."}
//! ```
//!
//! `delays` are CU delays, `elapsed[i] = delays[i] + C_i`. `computation`,
//! when present, gives `C_i` directly and wins over the subtraction. Source
//! segments come from `segment_durations`, else from a uniform `segment_ms`,
//! else from the distinct values of `delays`. Unknown fields are ignored.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::{SourceSegment, TokenEvent, Trace, ValidTrace};

/// Slack when checking `elapsed >= delays` and clamping the recovered `C_i`.
const ELAPSED_SLACK_MS: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub index: u64,
    #[serde(default)]
    pub prediction: String,
    pub delays: Vec<f64>,
    pub elapsed: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub computation: Option<Vec<f64>>,
    pub source_length: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segment_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segment_durations: Option<Vec<f64>>,
    #[serde(default)]
    pub reference: String,
}

/// Where a record's segment durations came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SegmentSource {
    Explicit,
    Uniform,
    InferredFromDelays,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ReadOptions {
    /// Skip records that fail to parse or validate instead of aborting.
    pub lenient: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkippedRecord {
    pub line: usize,
    pub error: Error,
}

#[derive(Debug, Clone, Default)]
pub struct ReadReport {
    pub traces: Vec<ValidTrace>,
    pub segment_sources: Vec<SegmentSource>,
    pub skipped: Vec<SkippedRecord>,
}

fn uniform_segments(segment_ms: f64, source_length: f64) -> Option<Vec<f64>> {
    if !(segment_ms.is_finite() && segment_ms > 0.0) {
        return None;
    }
    let full = ((source_length + 1e-9) / segment_ms).floor() as usize;
    let mut out = vec![segment_ms; full];
    let rest = source_length - full as f64 * segment_ms;
    if rest > 1e-6 {
        out.push(rest);
    }
    Some(out)
}

fn inferred_segments(delays: &[f64], source_length: f64) -> Vec<f64> {
    let mut bounds: Vec<f64> = delays.iter().copied().filter(|&d| d > 0.0).collect();
    bounds.sort_by(f64::total_cmp);
    bounds.dedup();
    if bounds.last().is_none_or(|&last| last < source_length) {
        bounds.push(source_length);
    }
    let mut prev = 0.0;
    bounds
        .into_iter()
        .map(|b| {
            let d = b - prev;
            prev = b;
            d
        })
        .collect()
}

impl LogRecord {
    /// Converts a record to a trace without validating it.
    pub fn into_trace(self, line: usize) -> Result<(Trace, SegmentSource)> {
        let schema = |reason: String| Error::Schema { line, reason };
        let n = self.delays.len();
        if self.elapsed.len() != n {
            return Err(schema(format!(
                "{} delays but {} elapsed values",
                n,
                self.elapsed.len()
            )));
        }
        if let Some(c) = &self.computation {
            if c.len() != n {
                return Err(schema(format!(
                    "{} delays but {} computation values",
                    n,
                    c.len()
                )));
            }
        }
        let words: Vec<&str> = self.prediction.split_whitespace().collect();
        if !words.is_empty() && words.len() != n {
            return Err(schema(format!(
                "prediction has {} tokens but {} delays",
                words.len(),
                n
            )));
        }
        for (i, (&e, &d)) in self.elapsed.iter().zip(&self.delays).enumerate() {
            if e < d - ELAPSED_SLACK_MS {
                return Err(schema(format!(
                    "elapsed[{i}] = {e} is below delays[{i}] = {d}"
                )));
            }
        }

        let computation: Vec<f64> = match self.computation {
            Some(c) => c,
            None => self
                .elapsed
                .iter()
                .zip(&self.delays)
                .map(|(e, d)| (e - d).max(0.0))
                .collect(),
        };

        let (durations, source) = if let Some(list) = self.segment_durations {
            (list, SegmentSource::Explicit)
        } else if let Some(size) = self.segment_ms {
            let tiled = uniform_segments(size, self.source_length)
                .ok_or_else(|| schema(format!("invalid segment_ms {size}")))?;
            (tiled, SegmentSource::Uniform)
        } else {
            (
                inferred_segments(&self.delays, self.source_length),
                SegmentSource::InferredFromDelays,
            )
        };
        let segments = durations
            .into_iter()
            .map(SourceSegment::new)
            .collect::<Result<Vec<_>>>()?;

        let tokens = self
            .delays
            .iter()
            .zip(&computation)
            .enumerate()
            .map(|(i, (&cu, &c))| TokenEvent {
                index: i + 1,
                text: words.get(i).map(|w| w.to_string()),
                cu_delay_ms: cu,
                computation_ts_ms: c,
            })
            .collect();

        Ok((
            Trace {
                id: self.index.to_string(),
                segments,
                tokens,
                reference_length: self.reference.split_whitespace().count().max(1),
            },
            source,
        ))
    }
}

/// Streaming reader yielding one validated trace per non-empty line.
pub struct LogReader<R> {
    lines: std::io::Lines<R>,
    line: usize,
}

impl<R: BufRead> LogReader<R> {
    pub fn new(reader: R) -> Self {
        Self {
            lines: reader.lines(),
            line: 0,
        }
    }

    fn parse_line(&self, text: &str) -> Result<(ValidTrace, SegmentSource)> {
        let record: LogRecord = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: self.line,
            reason: e.to_string(),
        })?;
        let (trace, source) = record.into_trace(self.line)?;
        Ok((trace.validate()?, source))
    }
}

impl<R: BufRead> Iterator for LogReader<R> {
    /// Errors carry the 1-based line number they occurred on.
    type Item = std::result::Result<(ValidTrace, SegmentSource), SkippedRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let text = self.lines.next()?;
            self.line += 1;
            let line = self.line;
            let text = match text {
                Ok(t) => t,
                Err(e) => {
                    return Some(Err(SkippedRecord {
                        line,
                        error: e.into(),
                    }))
                }
            };
            if text.trim().is_empty() {
                continue;
            }
            return Some(
                self.parse_line(&text)
                    .map_err(|error| SkippedRecord { line, error }),
            );
        }
    }
}

pub fn read_log<R: BufRead>(reader: R, options: ReadOptions) -> Result<ReadReport> {
    let mut report = ReadReport::default();
    for item in LogReader::new(reader) {
        match item {
            Ok((trace, source)) => {
                report.traces.push(trace);
                report.segment_sources.push(source);
            }
            Err(skipped) if options.lenient && !matches!(skipped.error, Error::Io { .. }) => {
                report.skipped.push(skipped)
            }
            Err(SkippedRecord { line, error }) => {
                return Err(match error {
                    Error::Malformed(reason) => Error::Schema {
                        line,
                        reason: format!("invalid trace: {reason}"),
                    },
                    other => other,
                })
            }
        }
    }
    Ok(report)
}

/// Rounds to the 3-decimal precision used on disk.
fn round_ms(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

fn ms_list(values: impl Iterator<Item = f64>) -> String {
    let items: Vec<String> = values.map(|v| format!("{v:.3}")).collect();
    format!("[{}]", items.join(","))
}

/// Serializes one trace as a log line (no trailing newline).
///
/// `elapsed` and `source_length` are derived from the rounded components so
/// that re-serializing a trace read back from disk is byte-identical.
///
/// Tokens without text are written as `_`; the reference is written as
/// `reference_length` placeholder tokens since traces keep only its length.
pub fn format_record(trace: &Trace, position: usize) -> String {
    let index = trace.id.parse::<u64>().unwrap_or(position as u64);
    let prediction = if trace.tokens.iter().all(|t| t.text.is_none()) {
        String::new()
    } else {
        trace
            .tokens
            .iter()
            .map(|t| t.text.as_deref().unwrap_or("_"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let reference = vec!["_"; trace.reference_length].join(" ");
    let json_str = |s: &str| serde_json::to_string(s).expect("strings always serialize");
    format!(
        "{{\"index\":{index},\"prediction\":{},\"delays\":{},\"elapsed\":{},\"computation\":{},\"source_length\":{:.3},\"segment_durations\":{},\"reference\":{}}}",
        json_str(&prediction),
        ms_list(trace.tokens.iter().map(|t| t.cu_delay_ms)),
        ms_list(
            trace
                .tokens
                .iter()
                .map(|t| round_ms(t.cu_delay_ms) + round_ms(t.computation_ts_ms))
        ),
        ms_list(trace.tokens.iter().map(|t| t.computation_ts_ms)),
        trace.segments.iter().map(|s| round_ms(s.duration_ms())).sum::<f64>(),
        ms_list(trace.segments.iter().map(|s| s.duration_ms())),
        json_str(&reference),
    )
}

/// Writes one line per trace and returns the number of records written.
pub fn write_log<W: Write>(traces: &[ValidTrace], mut writer: W) -> Result<usize> {
    for (position, trace) in traces.iter().enumerate() {
        writeln!(writer, "{}", format_record(trace, position)).map_err(|e| Error::Io {
            instance: Some(trace.id.clone()),
            reason: e.to_string(),
        })?;
    }
    writer.flush()?;
    Ok(traces.len())
}

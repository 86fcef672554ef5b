//! Report tables written by the command-line front end, and a parser that
//! reads evaluation CSVs back into [`LatencyReport`]s.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::delay::{DelayMode, DelaySequence};
use crate::error::{Error, Result};
use crate::metrics::{CorpusAverage, LatencyReport, MeanScores, MetricVariant, ModeScores};

pub const EVALUATE_HEADER: [&str; 8] = [
    "instance_id",
    "mode",
    "AL_ms",
    "LAAL_ms",
    "cutoff",
    "tokens",
    "ref_len",
    "source_ms",
];

/// Instance id used for the corpus-mean rows.
pub const CORPUS_ROW_ID: &str = "corpus_mean";

fn io_err(e: impl std::fmt::Display) -> Error {
    Error::Io {
        instance: None,
        reason: e.to_string(),
    }
}

fn fmt_opt(v: Option<f64>, decimals: usize) -> String {
    v.map(|x| format!("{x:.decimals$}")).unwrap_or_default()
}

fn metric_cell(v: Option<f64>, variant: MetricVariant, metrics: &[MetricVariant]) -> String {
    if metrics.contains(&variant) {
        fmt_opt(v, 3)
    } else {
        String::new()
    }
}

/// Evaluation table: one row per instance and mode, then one corpus-mean
/// row per mode, then a `#` footer with instance counts.
pub fn write_evaluate_csv<W: Write + ?Sized>(
    writer: &mut W,
    reports: &[LatencyReport],
    corpus: &CorpusAverage,
    metrics: &[MetricVariant],
    skipped_lines: usize,
) -> Result<()> {
    {
        let mut csv = csv::Writer::from_writer(&mut *writer);
        csv.write_record(EVALUATE_HEADER).map_err(io_err)?;
        for report in reports {
            for (mode, scores) in &report.modes {
                csv.write_record([
                    report.instance_id.clone(),
                    mode.to_string(),
                    metric_cell(scores.al_ms, MetricVariant::Al, metrics),
                    metric_cell(scores.laal_ms, MetricVariant::Laal, metrics),
                    scores.cutoff.map(|c| c.to_string()).unwrap_or_default(),
                    report.token_count.to_string(),
                    report.reference_length.to_string(),
                    format!("{:.3}", report.total_source_ms),
                ])
                .map_err(io_err)?;
            }
        }
        for (mode, mean) in &corpus.modes {
            csv.write_record([
                CORPUS_ROW_ID.to_string(),
                mode.to_string(),
                metric_cell(mean.al_ms, MetricVariant::Al, metrics),
                metric_cell(mean.laal_ms, MetricVariant::Laal, metrics),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
            ])
            .map_err(io_err)?;
        }
        csv.flush()?;
    }
    writeln!(
        writer,
        "# instances={} scored={} skipped={}",
        reports.len(),
        reports.len() - corpus.skipped,
        corpus.skipped + skipped_lines
    )?;
    Ok(())
}

/// An evaluation CSV read back in.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedEvaluation {
    pub reports: Vec<LatencyReport>,
    pub corpus: BTreeMap<DelayMode, MeanScores>,
    pub skipped: Option<usize>,
}

fn parse_cell<T: std::str::FromStr>(cell: &str, line: usize, name: &str) -> Result<Option<T>> {
    if cell.is_empty() {
        return Ok(None);
    }
    cell.parse().map(Some).map_err(|_| Error::Parse {
        line,
        reason: format!("bad {name} value `{cell}`"),
    })
}

pub fn parse_evaluate_csv<R: Read>(mut reader: R) -> Result<ParsedEvaluation> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    let mut skipped = None;
    let mut body = String::new();
    for line in text.lines() {
        if let Some(comment) = line.strip_prefix('#') {
            skipped = comment
                .split_whitespace()
                .find_map(|kv| kv.strip_prefix("skipped="))
                .and_then(|v| v.parse().ok())
                .or(skipped);
        } else {
            body.push_str(line);
            body.push('\n');
        }
    }

    let mut csv = csv::Reader::from_reader(body.as_bytes());
    let header = csv.headers().map_err(io_err)?.clone();
    if header.iter().ne(EVALUATE_HEADER) {
        return Err(Error::Parse {
            line: 1,
            reason: format!("unexpected header {header:?}"),
        });
    }

    let mut reports: Vec<LatencyReport> = Vec::new();
    let mut corpus = BTreeMap::new();
    for (i, row) in csv.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::Parse {
            line,
            reason: e.to_string(),
        })?;
        let mode: DelayMode = row[1]
            .parse()
            .map_err(|reason| Error::Parse { line, reason })?;
        let al_ms = parse_cell(&row[2], line, "AL_ms")?;
        let laal_ms = parse_cell(&row[3], line, "LAAL_ms")?;
        if &row[0] == CORPUS_ROW_ID {
            corpus.insert(
                mode,
                MeanScores {
                    al_ms,
                    laal_ms,
                    instances: 0,
                },
            );
            continue;
        }
        let scores = ModeScores {
            al_ms,
            laal_ms,
            cutoff: parse_cell(&row[4], line, "cutoff")?,
        };
        let token_count = parse_cell(&row[5], line, "tokens")?.unwrap_or(0);
        let reference_length = parse_cell(&row[6], line, "ref_len")?.unwrap_or(0);
        let total_source_ms = parse_cell(&row[7], line, "source_ms")?.unwrap_or(0.0);
        match reports.last_mut() {
            Some(last) if last.instance_id == row[0] => {
                last.modes.insert(mode, scores);
            }
            _ => reports.push(LatencyReport {
                instance_id: row[0].to_string(),
                modes: BTreeMap::from([(mode, scores)]),
                token_count,
                reference_length,
                total_source_ms,
            }),
        }
    }
    Ok(ParsedEvaluation {
        reports,
        corpus,
        skipped,
    })
}

/// Trailer line of the `records` output format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub corpus: CorpusAverage,
    pub skipped_lines: usize,
}

pub fn write_evaluate_records<W: Write + ?Sized>(
    writer: &mut W,
    reports: &[LatencyReport],
    corpus: &CorpusAverage,
    skipped_lines: usize,
) -> Result<()> {
    for report in reports {
        serde_json::to_writer(&mut *writer, report).map_err(io_err)?;
        writeln!(writer)?;
    }
    let trailer = CorpusRecord {
        corpus: corpus.clone(),
        skipped_lines,
    };
    serde_json::to_writer(&mut *writer, &trailer).map_err(io_err)?;
    writeln!(writer)?;
    Ok(())
}

/// Mode comparison table with 1-decimal ms.
pub fn write_compare_csv<W: Write + ?Sized>(
    writer: &mut W,
    corpus: &CorpusAverage,
    metrics: &[MetricVariant],
) -> Result<()> {
    let mut csv = csv::Writer::from_writer(&mut *writer);
    csv.write_record(["mode", "AL_ms", "LAAL_ms", "instances"])
        .map_err(io_err)?;
    for (mode, mean) in &corpus.modes {
        let cell = |variant: MetricVariant| {
            if metrics.contains(&variant) {
                fmt_opt(mean.get(variant), 1)
            } else {
                String::new()
            }
        };
        csv.write_record([
            mode.to_string(),
            cell(MetricVariant::Al),
            cell(MetricVariant::Laal),
            mean.instances.to_string(),
        ])
        .map_err(io_err)?;
    }
    csv.flush()?;
    Ok(())
}

/// Per-token delays of every mode for one instance.
pub struct DelayDump<'a> {
    pub instance_id: &'a str,
    pub cu: &'a DelaySequence,
    pub ca: &'a DelaySequence,
    pub ca_star: &'a DelaySequence,
}

pub fn write_delay_dump<W: Write + ?Sized>(writer: &mut W, dumps: &[DelayDump<'_>]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(&mut *writer);
    csv.write_record([
        "instance_id",
        "token",
        "cu_ms",
        "ca_ms",
        "ca_star_ms",
        "inference_ms",
    ])
    .map_err(io_err)?;
    for dump in dumps {
        let inference = dump.ca_star.inference_ms.as_deref().unwrap_or(&[]);
        for i in 0..dump.cu.len() {
            csv.write_record([
                dump.instance_id.to_string(),
                (i + 1).to_string(),
                format!("{:.3}", dump.cu.values_ms[i]),
                format!("{:.3}", dump.ca.values_ms[i]),
                format!("{:.3}", dump.ca_star.values_ms[i]),
                fmt_opt(inference.get(i).copied(), 3),
            ])
            .map_err(io_err)?;
        }
    }
    csv.flush()?;
    Ok(())
}

/// One line of a scale study: corpus means at a given repeat count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleRow {
    pub repeats: usize,
    pub mode: DelayMode,
    pub al_ms: Option<f64>,
    pub laal_ms: Option<f64>,
    /// Mean delay of each instance's final token.
    pub last_delay_ms: Option<f64>,
    pub source_ms: f64,
}

pub fn write_scale_csv<W: Write + ?Sized>(
    writer: &mut W,
    rows: &[ScaleRow],
    summary: &str,
) -> Result<()> {
    {
        let mut csv = csv::Writer::from_writer(&mut *writer);
        csv.write_record([
            "repeats",
            "mode",
            "AL_ms",
            "LAAL_ms",
            "last_delay_ms",
            "source_ms",
        ])
        .map_err(io_err)?;
        for row in rows {
            csv.write_record([
                row.repeats.to_string(),
                row.mode.to_string(),
                fmt_opt(row.al_ms, 3),
                fmt_opt(row.laal_ms, 3),
                fmt_opt(row.last_delay_ms, 3),
                format!("{:.3}", row.source_ms),
            ])
            .map_err(io_err)?;
        }
        csv.flush()?;
    }
    writeln!(writer, "# summary {summary}")?;
    Ok(())
}

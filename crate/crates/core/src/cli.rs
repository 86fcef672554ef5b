//! Command-line front end: `evaluate`, `simulate`, `scale-study`, `compare`.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::delay::{ca_star_delays, cu_delays, delays, legacy_ca_delays, DelayMode};
use crate::error::Error;
use crate::ingest::{read_log, write_log, ReadOptions, ReadReport};
use crate::metrics::{corpus_average, evaluate_instance, LatencyReport, MetricVariant};
use crate::report::{
    write_compare_csv, write_delay_dump, write_evaluate_csv, write_evaluate_records,
    write_scale_csv, DelayDump, ScaleRow,
};
use crate::simulator::{concat_scale, simulate, ComputeModel, PolicySpec, SimulationOutcome};
use crate::trace::ValidTrace;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "simulst-latency",
    version,
    about = "Computation-aware latency (CU / CA / CA*) for simultaneous speech translation logs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Score every instance of a log and append corpus means.
    Evaluate(EvaluateArgs),
    /// Generate synthetic traces with a wait-k stride-n policy.
    Simulate(SimulateArgs),
    /// Tile traces back to back and track how each mode's latency grows.
    ScaleStudy(ScaleStudyArgs),
    /// Corpus-mean AL/LAAL side by side for CU, CA and CA*.
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Records,
}

#[derive(Debug, Args)]
struct ScoringArgs {
    /// Delay modes to score.
    #[arg(long, value_delimiter = ',', default_value = "CU,CA,CA_STAR")]
    modes: Vec<DelayMode>,
    /// Metric variants to report.
    #[arg(long, value_delimiter = ',', default_value = "AL,LAAL")]
    metrics: Vec<MetricVariant>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Skip malformed log lines instead of failing.
    #[arg(long)]
    lenient: bool,
    /// Byte-identical output for identical inputs.
    #[arg(long)]
    deterministic: bool,
    /// Worker threads for per-instance scoring.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    input: PathBuf,
    /// Output file; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    scoring: ScoringArgs,
}

#[derive(Debug, Clone, Copy)]
struct PolicyArg {
    k: usize,
    n: usize,
}

impl FromStr for PolicyArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (k, n) = s
            .split_once(',')
            .ok_or_else(|| format!("expected k,n, got `{s}`"))?;
        let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("`{v}`: {e}"));
        Ok(PolicyArg {
            k: parse(k)?,
            n: parse(n)?,
        })
    }
}

#[derive(Debug, Clone, Copy)]
enum ComputeArg {
    Constant(f64),
    Uniform(f64, f64),
}

impl FromStr for ComputeArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let num = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}"));
        match s.split_once(':') {
            Some(("constant", v)) => Ok(ComputeArg::Constant(num(v)?)),
            Some(("uniform", range)) => {
                let (lo, hi) = range
                    .split_once(',')
                    .ok_or_else(|| format!("expected uniform:<lo>,<hi>, got `{s}`"))?;
                Ok(ComputeArg::Uniform(num(lo)?, num(hi)?))
            }
            _ => Err(format!(
                "expected constant:<ms> or uniform:<lo>,<hi>, got `{s}`"
            )),
        }
    }
}

#[derive(Debug, Args)]
struct SimulationParams {
    /// Wait-k stride-n policy as `k,n`.
    #[arg(long, default_value = "4,3")]
    policy: PolicyArg,
    /// Tokens written after the source ends.
    #[arg(long, default_value_t = 0)]
    tail_tokens: usize,
    #[arg(long, default_value_t = 250.0)]
    segment_ms: f64,
    /// Number of source segments per instance.
    #[arg(long, default_value_t = 100)]
    segments: usize,
    /// Per-token inference cost.
    #[arg(long, default_value = "constant:30")]
    compute: ComputeArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of instances to generate.
    #[arg(long, default_value_t = 1)]
    instances: usize,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Log file to write.
    #[arg(long)]
    output: PathBuf,
    /// Ground-truth emission times; defaults to `<output>.emission.jsonl`.
    #[arg(long)]
    emission_output: Option<PathBuf>,
    #[command(flatten)]
    params: SimulationParams,
}

#[derive(Debug, Args)]
struct ScaleStudyArgs {
    /// Base log; when omitted a base corpus is simulated from the simulation flags.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Repeat counts, ascending.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4")]
    repeats: Vec<usize>,
    #[command(flatten)]
    scoring: ScoringArgs,
    #[command(flatten)]
    params: SimulationParams,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Also write per-token delays of every mode to this CSV.
    #[arg(long)]
    dump_delays: Option<PathBuf>,
    #[command(flatten)]
    scoring: ScoringArgs,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidPolicy(_) | Error::InvalidCompute(_) => Failure::Usage(e.to_string()),
            other => Failure::Data(other),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Data(e.into())
    }
}

type CliResult<T> = Result<T, Failure>;

/// Runs the CLI with explicit arguments and returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            let _ = write!(stderr, "{}", err.render());
            return if err.use_stderr() {
                EXIT_USAGE
            } else {
                EXIT_OK
            };
        }
    };
    let result = match cli.command {
        Command::Evaluate(args) => cmd_evaluate(&args, stdout, stderr),
        Command::Simulate(args) => cmd_simulate(&args, stderr),
        Command::ScaleStudy(args) => cmd_scale_study(&args, stdout),
        Command::Compare(args) => cmd_compare(&args, stdout),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Data(err)) => {
            let _ = writeln!(stderr, "error: {err}");
            EXIT_DATA
        }
    }
}

fn check_scoring(scoring: &ScoringArgs) -> CliResult<()> {
    if scoring.modes.is_empty() {
        return Err(Failure::Usage("--modes must name at least one mode".into()));
    }
    if scoring.metrics.is_empty() {
        return Err(Failure::Usage(
            "--metrics must name at least one metric".into(),
        ));
    }
    if scoring.workers == Some(0) {
        return Err(Failure::Usage("--workers must be at least 1".into()));
    }
    Ok(())
}

fn dedup_modes(modes: &[DelayMode]) -> Vec<DelayMode> {
    let mut out = modes.to_vec();
    out.sort();
    out.dedup();
    out
}

fn load(path: &Path, lenient: bool) -> CliResult<ReadReport> {
    let file = File::open(path).map_err(|e| {
        Failure::Data(Error::Io {
            instance: None,
            reason: format!("{}: {e}", path.display()),
        })
    })?;
    Ok(read_log(BufReader::new(file), ReadOptions { lenient })?)
}

/// Scores instances in parallel; results stay in input order.
fn score_all(
    traces: &[ValidTrace],
    modes: &[DelayMode],
    workers: Option<usize>,
) -> CliResult<Vec<LatencyReport>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| Failure::Usage(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| {
        traces
            .par_iter()
            .map(|t| evaluate_instance(t, modes))
            .collect()
    }))
}

fn with_output<F>(path: Option<&Path>, stdout: &mut dyn Write, body: F) -> CliResult<()>
where
    F: FnOnce(&mut dyn Write) -> crate::error::Result<()>,
{
    match path {
        Some(p) => {
            let mut file = BufWriter::new(File::create(p)?);
            body(&mut file)?;
            file.flush()?;
        }
        None => body(stdout)?,
    }
    Ok(())
}

fn cmd_evaluate(
    args: &EvaluateArgs,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> CliResult<()> {
    let scoring = &args.scoring;
    check_scoring(scoring)?;
    let modes = dedup_modes(&scoring.modes);
    let log = load(&args.input, scoring.lenient)?;
    for skipped in &log.skipped {
        let _ = writeln!(stderr, "skipped: {}", skipped.error);
    }
    let reports = score_all(&log.traces, &modes, scoring.workers)?;
    let corpus = corpus_average(&reports)?;
    let skipped_lines = log.skipped.len();
    with_output(args.output.as_deref(), stdout, |w| match scoring.format {
        Format::Csv => write_evaluate_csv(w, &reports, &corpus, &scoring.metrics, skipped_lines),
        Format::Records => write_evaluate_records(w, &reports, &corpus, skipped_lines),
    })
}

fn compute_model(params: &SimulationParams, instance: usize) -> ComputeModel {
    match params.compute {
        ComputeArg::Constant(ms) => ComputeModel::Constant { ms },
        ComputeArg::Uniform(lo_ms, hi_ms) => ComputeModel::SeededUniform {
            lo_ms,
            hi_ms,
            seed: params.seed.wrapping_add(instance as u64),
        },
    }
}

fn run_simulations(params: &SimulationParams) -> CliResult<Vec<SimulationOutcome>> {
    if params.instances == 0 {
        return Err(Failure::Usage("--instances must be at least 1".into()));
    }
    if !(params.segment_ms.is_finite() && params.segment_ms > 0.0) {
        return Err(Failure::Usage(format!(
            "--segment-ms must be positive, got {}",
            params.segment_ms
        )));
    }
    let durations = vec![params.segment_ms; params.segments];
    let policy = PolicySpec::WaitKStrideN {
        k: params.policy.k,
        n: params.policy.n,
        tail_tokens: params.tail_tokens,
    };
    (0..params.instances)
        .map(|i| {
            simulate(&durations, &policy, &compute_model(params, i))
                .map(|o| o.with_id(i.to_string()))
                .map_err(|e| match e {
                    Error::Malformed(msg) => Failure::Usage(msg),
                    other => other.into(),
                })
        })
        .collect()
}

fn cmd_simulate(args: &SimulateArgs, stderr: &mut dyn Write) -> CliResult<()> {
    let outcomes = run_simulations(&args.params)?;
    let traces: Vec<ValidTrace> = outcomes.iter().map(|o| o.trace.clone()).collect();

    let mut log = BufWriter::new(File::create(&args.output)?);
    let written = write_log(&traces, &mut log)?;

    let emission_path = args.emission_output.clone().unwrap_or_else(|| {
        let mut name = args.output.clone().into_os_string();
        name.push(".emission.jsonl");
        PathBuf::from(name)
    });
    let mut sidecar = BufWriter::new(File::create(&emission_path)?);
    for outcome in &outcomes {
        let times: Vec<String> = outcome
            .emission_wall_ms
            .iter()
            .map(|t| format!("{t:.3}"))
            .collect();
        writeln!(
            sidecar,
            "{{\"index\":{},\"emission_wall\":[{}]}}",
            outcome.trace.id,
            times.join(",")
        )?;
    }
    sidecar.flush()?;
    let _ = writeln!(
        stderr,
        "wrote {written} simulated instance(s) to {} (emission times in {})",
        args.output.display(),
        emission_path.display()
    );
    Ok(())
}

fn relative_spread(values: &[f64]) -> f64 {
    let base = values[0];
    values
        .iter()
        .map(|v| ((v - base) / base).abs())
        .fold(0.0, f64::max)
}

fn cmd_scale_study(args: &ScaleStudyArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let scoring = &args.scoring;
    check_scoring(scoring)?;
    if args.repeats.is_empty()
        || args.repeats[0] == 0
        || args.repeats.windows(2).any(|w| w[0] >= w[1])
    {
        return Err(Failure::Usage(
            "--repeats must be positive and strictly ascending".into(),
        ));
    }
    let modes = dedup_modes(&scoring.modes);
    let bases: Vec<ValidTrace> = match &args.input {
        Some(path) => load(path, scoring.lenient)?.traces,
        None => run_simulations(&args.params)?
            .into_iter()
            .map(|o| o.trace)
            .collect(),
    };

    let mut rows = Vec::new();
    for &r in &args.repeats {
        let scaled = bases
            .iter()
            .map(|b| concat_scale(b, r))
            .collect::<crate::error::Result<Vec<_>>>()?;
        let reports = score_all(&scaled, &modes, scoring.workers)?;
        let corpus = corpus_average(&reports)?;
        let source_ms = scaled.iter().map(|t| t.total_ms()).sum::<f64>() / scaled.len() as f64;
        for &mode in &modes {
            let lasts: Vec<f64> = scaled
                .iter()
                .filter_map(|t| delays(t, mode).values_ms.last().copied())
                .collect();
            let mean = corpus.modes.get(&mode);
            rows.push(ScaleRow {
                repeats: r,
                mode,
                al_ms: mean
                    .and_then(|m| m.al_ms)
                    .filter(|_| scoring.metrics.contains(&MetricVariant::Al)),
                laal_ms: mean
                    .and_then(|m| m.laal_ms)
                    .filter(|_| scoring.metrics.contains(&MetricVariant::Laal)),
                last_delay_ms: (!lasts.is_empty())
                    .then(|| lasts.iter().sum::<f64>() / lasts.len() as f64),
                source_ms,
            });
        }
    }

    let column = |mode: DelayMode, pick: fn(&ScaleRow) -> Option<f64>| -> Option<Vec<f64>> {
        rows.iter().filter(|r| r.mode == mode).map(pick).collect()
    };
    let mut summary = Vec::new();
    for mode in &modes {
        if let Some(laal) = column(*mode, |r| r.laal_ms) {
            summary.push(format!(
                "{mode}_laal_max_rel_change={:.6}",
                relative_spread(&laal)
            ));
        }
    }
    if let Some(ca) = column(DelayMode::Ca, |r| r.laal_ms) {
        summary.push(format!(
            "CA_laal_strictly_increasing={}",
            ca.windows(2).all(|w| w[0] < w[1])
        ));
    }
    if let (Some(ca), Some(star)) = (
        column(DelayMode::Ca, |r| r.last_delay_ms),
        column(DelayMode::CaStar, |r| r.last_delay_ms),
    ) {
        let gap: Vec<f64> = ca.iter().zip(&star).map(|(a, s)| a - s).collect();
        summary.push(format!(
            "CA_last_grows_faster_than_CA_STAR={}",
            gap.windows(2).all(|w| w[0] < w[1])
        ));
    }
    with_output(args.output.as_deref(), stdout, |w| {
        write_scale_csv(w, &rows, &summary.join(" "))
    })
}

fn cmd_compare(args: &CompareArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let scoring = &args.scoring;
    check_scoring(scoring)?;
    let modes = dedup_modes(&scoring.modes);
    let log = load(&args.input, scoring.lenient)?;
    let reports = score_all(&log.traces, &modes, scoring.workers)?;
    let corpus = corpus_average(&reports)?;
    with_output(args.output.as_deref(), stdout, |w| match scoring.format {
        Format::Csv => write_compare_csv(w, &corpus, &scoring.metrics),
        Format::Records => {
            serde_json::to_writer(&mut *w, &corpus).map_err(|e| Error::Io {
                instance: None,
                reason: e.to_string(),
            })?;
            writeln!(w)?;
            Ok(())
        }
    })?;

    if let Some(path) = &args.dump_delays {
        let sequences: Vec<_> = log
            .traces
            .iter()
            .map(|t| (cu_delays(t), legacy_ca_delays(t), ca_star_delays(t)))
            .collect();
        let dumps: Vec<DelayDump<'_>> = log
            .traces
            .iter()
            .zip(&sequences)
            .map(|(t, (cu, ca, ca_star))| DelayDump {
                instance_id: &t.id,
                cu,
                ca,
                ca_star,
            })
            .collect();
        with_output(Some(path), stdout, |w| write_delay_dump(w, &dumps))?;
    }
    Ok(())
}

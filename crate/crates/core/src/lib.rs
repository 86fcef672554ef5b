//! Latency evaluation for simultaneous speech translation.
//!
//! Three per-token delay accountings are provided: computation-unaware (CU),
//! the legacy computation-aware delay (CA) that adds cumulative computation
//! on top of consumed audio, and the corrected computation-aware delay (CA*)
//! that tracks the generation backlog per source segment. Delays are scored
//! with AL and LAAL, and CA* can be checked against a discrete-event replay
//! of a single generation worker.

pub mod cli;
pub mod delay;
pub mod error;
pub mod ingest;
pub mod metrics;
pub mod report;
pub mod simulator;
pub mod trace;

pub use delay::{ca_star_delays, cu_delays, delays, legacy_ca_delays, DelayMode, DelaySequence};
pub use error::{Error, Result};
pub use ingest::{read_log, write_log, LogRecord, ReadOptions, ReadReport, SegmentSource};
pub use metrics::{
    average_lagging, corpus_average, cutoff_index, evaluate_instance, oracle_delays, CorpusAverage,
    LatencyReport, MetricVariant, ModeScores, OracleDelays,
};
pub use simulator::{
    concat_scale, simulate, wall_clock_oracle, ComputeModel, PolicySpec, SimulationOutcome,
};
pub use trace::{
    derive_blocks, validate_trace, BlockStructure, SourceSegment, TokenEvent, Trace, ValidTrace,
};

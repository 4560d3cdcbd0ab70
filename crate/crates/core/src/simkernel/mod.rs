//! Deterministic discrete-event model of a separation-kernel CPU scheduler.
//!
//! Boards run in a fixed cyclic order. Every context switch costs
//! `max(2^N * (base + critical_section + jitter), cache_flush_penalty)` and
//! is perceived as at least the enforced switch duration. The receiver reads
//! the time-base counter at each of its switch-ins. Time is integer
//! nanoseconds throughout and jitter comes from a seeded ChaCha8 stream, so
//! equal `(config, attack, seed)` triples give bit-identical traces.

mod config;
mod counter;
mod engine;
mod error;
mod jitter;
mod schedule;
mod trace;

pub use config::{
    apply_overrides, parse_override, standard_boards, validate_config, BoardRole, HypercallCost, HypercallKind,
    HypercallModel, JitterKind, JitterModel, SimConfig, ValidatedConfig, VirtualBoardSpec, MAX_SPEED_EXPONENT,
    MIN_MAJOR_FRAMES,
};
pub use counter::TimeBase;
pub use engine::{run_simulation, simulate_trace, AuditEvent, EventLog, SwitchEvent};
pub use error::{ConfigError, ConfigIssue, SimError};
pub use jitter::JitterSampler;
pub use schedule::{build_schedule, MinorFrame, Schedule};
pub use trace::{sidecar_path, TimingTrace, TraceIoError, TraceMetadata, TraceSample, TRACE_CSV_HEADER};

pub(crate) use trace::{parse_trace_csv, read as read_text};

/// Counter value after `virtual_ns` for the given configuration.
pub fn read_counter(config: &SimConfig, virtual_ns: u64) -> u64 {
    TimeBase::new(config.counter_freq, config.speed_exponent).read(virtual_ns)
}

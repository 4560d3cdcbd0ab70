use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::simkernel::{
    parse_trace_csv, read_text, sidecar_path, TimingTrace, TraceMetadata, TraceSample, TRACE_CSV_HEADER,
};

/// Metadata fields a trace cannot be assessed without.
pub const REQUIRED_METADATA: [&str; 3] = ["config_digest", "attack", "counter_freq"];

/// Metadata known about an external trace. Any field left `None` is taken
/// from the `<stem>.meta.json` sidecar when one exists.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartialMetadata {
    pub config_digest: Option<String>,
    pub attack: Option<bool>,
    pub seed: Option<u64>,
    pub counter_freq: Option<u64>,
    pub start_offset: Option<u64>,
    pub speed_exponent: Option<u32>,
    #[serde(default)]
    pub overrides: Vec<String>,
}

impl PartialMetadata {
    /// Fills unset fields from `other`.
    fn or(mut self, other: PartialMetadata) -> Self {
        self.config_digest = self.config_digest.or(other.config_digest);
        self.attack = self.attack.or(other.attack);
        self.seed = self.seed.or(other.seed);
        self.counter_freq = self.counter_freq.or(other.counter_freq);
        self.start_offset = self.start_offset.or(other.start_offset);
        self.speed_exponent = self.speed_exponent.or(other.speed_exponent);
        if self.overrides.is_empty() {
            self.overrides = other.overrides;
        }
        self
    }
}

/// Reads a trace produced elsewhere, either in the native CSV format
/// (`frame_index,delta_ticks` header) or as a raw list of counter values,
/// one per line, which is differenced into deltas. Blank lines and lines
/// starting with `#` are skipped in raw lists.
pub fn ingest_trace(path: &Path, metadata: &PartialMetadata) -> Result<TimingTrace, HarnessError> {
    let text = read_text(path)?;
    let first = text.lines().map(str::trim).find(|l| !l.is_empty());
    let (samples, raw_offset) = if first == Some(TRACE_CSV_HEADER) {
        (parse_trace_csv(path, &text)?, None)
    } else {
        let (s, o) = parse_raw(path, &text)?;
        (s, Some(o))
    };

    let sidecar = sidecar_path(path);
    let from_file = if sidecar.exists() {
        let text = read_text(&sidecar)?;
        serde_json::from_str::<PartialMetadata>(&text).map_err(|e| HarnessError::Ingest {
            path: sidecar.clone(),
            line: e.line(),
            message: e.to_string(),
        })?
    } else {
        PartialMetadata::default()
    };
    let merged = metadata.clone().or(from_file);

    let mut missing = Vec::new();
    if merged.config_digest.is_none() {
        missing.push(REQUIRED_METADATA[0].to_string());
    }
    if merged.attack.is_none() {
        missing.push(REQUIRED_METADATA[1].to_string());
    }
    if merged.counter_freq.is_none() {
        missing.push(REQUIRED_METADATA[2].to_string());
    }
    if !missing.is_empty() {
        return Err(HarnessError::MissingMetadata(missing));
    }
    if merged.counter_freq == Some(0) {
        return Err(HarnessError::Ingest {
            path: path.to_path_buf(),
            line: 0,
            message: "counter_freq must be > 0".into(),
        });
    }

    Ok(TimingTrace {
        samples,
        metadata: TraceMetadata {
            config_digest: merged.config_digest.unwrap_or_default(),
            attack: merged.attack.unwrap_or_default(),
            seed: merged.seed.unwrap_or(0),
            counter_freq: merged.counter_freq.unwrap_or_default(),
            start_offset: merged.start_offset.or(raw_offset).unwrap_or(0),
            speed_exponent: merged.speed_exponent,
            overrides: merged.overrides,
        },
    })
}

fn parse_raw(path: &Path, text: &str) -> Result<(Vec<TraceSample>, u64), HarnessError> {
    let err = |line: usize, message: String| HarnessError::Ingest {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut prev: Option<u64> = None;
    let mut first = 0;
    let mut samples = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v: u64 = line
            .parse()
            .map_err(|e| err(i + 1, format!("expected a counter value: {e}")))?;
        match prev {
            None => first = v,
            Some(p) if v <= p => {
                return Err(err(i + 1, format!("timestamps not increasing: {v} after {p}")));
            }
            Some(p) => samples.push(TraceSample {
                frame_index: samples.len() as u64 + 1,
                delta_ticks: v - p,
            }),
        }
        prev = Some(v);
    }
    if samples.is_empty() {
        return Err(err(0, "need at least two timestamps".into()));
    }
    Ok((samples, first))
}

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const TRACE_CSV_HEADER: &str = "frame_index,delta_ticks";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceSample {
    /// Major frame index of the later of the two receiver switch-ins.
    pub frame_index: u64,
    pub delta_ticks: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceMetadata {
    pub config_digest: String,
    pub attack: bool,
    pub seed: u64,
    pub counter_freq: u64,
    /// Counter value at the first receiver switch-in.
    #[serde(default)]
    pub start_offset: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speed_exponent: Option<u32>,
    /// `key=value` overrides applied to the source configuration.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub overrides: Vec<String>,
}

/// The receiver's time-between-context-switches samples.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimingTrace {
    pub samples: Vec<TraceSample>,
    pub metadata: TraceMetadata,
}

#[derive(Debug, Error)]
pub enum TraceIoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: bad metadata: {message}")]
    Metadata { path: PathBuf, message: String },
}

impl TimingTrace {
    pub fn deltas(&self) -> Vec<u64> {
        self.samples.iter().map(|s| s.delta_ticks).collect()
    }

    pub fn deltas_f64(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.delta_ticks as f64).collect()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.samples.len() * 16 + 32);
        out.push_str(TRACE_CSV_HEADER);
        out.push('\n');
        for s in &self.samples {
            let _ = writeln!(out, "{},{}", s.frame_index, s.delta_ticks);
        }
        out
    }

    pub fn metadata_json(&self) -> String {
        serde_json::to_string_pretty(&self.metadata).expect("metadata serializes")
    }

    /// Content digest over the CSV body and the metadata sidecar.
    pub fn digest(&self) -> String {
        let mut bytes = self.to_csv().into_bytes();
        bytes.extend_from_slice(self.metadata_json().as_bytes());
        crate::digest::short_digest(&bytes)
    }

    /// Writes `<stem>.csv` and `<stem>.meta.json` into `dir`; returns the CSV path.
    pub fn write_files(&self, dir: &Path, stem: &str) -> Result<PathBuf, TraceIoError> {
        fs::create_dir_all(dir).map_err(|source| TraceIoError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let csv = dir.join(format!("{stem}.csv"));
        write(&csv, self.to_csv().as_bytes())?;
        write(&sidecar_path(&csv), self.metadata_json().as_bytes())?;
        Ok(csv)
    }

    /// Reads a CSV written by [`TimingTrace::write_files`] together with its sidecar.
    pub fn read_files(csv: &Path) -> Result<Self, TraceIoError> {
        let samples = parse_trace_csv(csv, &read(csv)?)?;
        let meta_path = sidecar_path(csv);
        let meta_text = read(&meta_path)?;
        let metadata = serde_json::from_str(&meta_text).map_err(|e| TraceIoError::Metadata {
            path: meta_path,
            message: e.to_string(),
        })?;
        Ok(TimingTrace { samples, metadata })
    }
}

/// `foo.csv` -> `foo.meta.json`.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    let stem = csv.file_stem().and_then(|s| s.to_str()).unwrap_or("trace");
    csv.with_file_name(format!("{stem}.meta.json"))
}

pub(crate) fn parse_trace_csv(path: &Path, text: &str) -> Result<Vec<TraceSample>, TraceIoError> {
    let fmt_err = |line: usize, message: String| TraceIoError::Format {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == TRACE_CSV_HEADER => {}
        _ => return Err(fmt_err(1, format!("expected header `{TRACE_CSV_HEADER}`"))),
    }
    let mut samples = Vec::new();
    for (i, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (a, b) = line
            .split_once(',')
            .ok_or_else(|| fmt_err(i + 1, "expected two columns".into()))?;
        let frame_index = a
            .trim()
            .parse()
            .map_err(|e| fmt_err(i + 1, format!("frame_index: {e}")))?;
        let delta_ticks: u64 = b
            .trim()
            .parse()
            .map_err(|e| fmt_err(i + 1, format!("delta_ticks: {e}")))?;
        if delta_ticks == 0 {
            return Err(fmt_err(i + 1, "delta_ticks must be > 0".into()));
        }
        samples.push(TraceSample {
            frame_index,
            delta_ticks,
        });
    }
    Ok(samples)
}

pub(crate) fn read(path: &Path) -> Result<String, TraceIoError> {
    fs::read_to_string(path).map_err(|source| TraceIoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), TraceIoError> {
    fs::write(path, bytes).map_err(|source| TraceIoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

//! Experiment campaigns: grid expansion, parallel execution with resumable
//! persistence, external trace ingestion, cost-model calibration and the
//! findings report.

mod calibrate;
mod ingest;
mod plan;
mod report;
mod runner;
mod store;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use calibrate::{fit_config, CalibrationDiagnostic, CalibrationFit, MIN_VERIFY_FRAMES};
pub use ingest::{ingest_trace, PartialMetadata, REQUIRED_METADATA};
pub use plan::{expand_plan, point_config, ExpandedPlan, ExperimentPlan, GridPoint, RunDescriptor, MAX_RUNS};
pub use report::{histogram_csv, mitigation, render_report, write_report, NO_CHANNEL_HEADING};
pub use runner::{load_plan_result, run_plan, verdicts_csv, PlanResult, PointResult, RunOptions};
pub use store::{read_manifest, Manifest, ManifestRun, RunRecord};

use crate::simkernel::{ConfigError, SimError, TraceIoError};
use crate::timestats::StatsError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("plan: {0}")]
    Plan(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Trace(#[from] TraceIoError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{}, line {line}: {message}", path.display())]
    Ingest {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("missing required metadata: {}", .0.join(", "))]
    MissingMetadata(Vec<String>),
    #[error("calibration: {0}")]
    Calibration(String),
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// True for errors caused by bad inputs rather than by execution.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            HarnessError::Config(_)
                | HarnessError::Plan(_)
                | HarnessError::Ingest { .. }
                | HarnessError::MissingMetadata(_)
                | HarnessError::Stats(StatsError::DigestMismatch { .. })
                | HarnessError::Stats(StatsError::RepetitionMismatch { .. })
                | HarnessError::Stats(StatsError::AttackFlag)
                | HarnessError::Stats(StatsError::InvalidAlpha(_))
                | HarnessError::Trace(TraceIoError::Format { .. })
                | HarnessError::Trace(TraceIoError::Metadata { .. })
        )
    }
}

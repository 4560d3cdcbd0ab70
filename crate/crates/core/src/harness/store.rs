//! Results directory layout:
//!
//! ```text
//! <dir>/plan.json          manifest: plan, plan digest, toolkit version, runs
//! <dir>/runs.jsonl         one record per finished run (append-only)
//! <dir>/traces/<digest>.csv + <digest>.meta.json
//! <dir>/verdicts.csv
//! <dir>/report.md
//! <dir>/histograms/<point>.csv
//! ```

use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::plan::{ExpandedPlan, ExperimentPlan, GridPoint};
use super::HarnessError;
use crate::simkernel::TimingTrace;

pub const MANIFEST: &str = "plan.json";
pub const RUN_INDEX: &str = "runs.jsonl";
pub const TRACE_DIR: &str = "traces";
pub const VERDICTS: &str = "verdicts.csv";
pub const REPORT: &str = "report.md";
pub const HISTOGRAM_DIR: &str = "histograms";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestRun {
    pub run_id: String,
    pub point: usize,
    pub attack: bool,
    pub repetition: u32,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub plan_digest: String,
    pub toolkit_version: String,
    pub plan: ExperimentPlan,
    pub points: Vec<GridPoint>,
    pub runs: Vec<ManifestRun>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunRecord {
    Ok { run_id: String, trace_digest: String },
    Failed { run_id: String, error: String },
}

impl RunRecord {
    pub fn run_id(&self) -> &str {
        match self {
            RunRecord::Ok { run_id, .. } | RunRecord::Failed { run_id, .. } => run_id,
        }
    }
}

pub struct Store {
    dir: PathBuf,
}

impl Store {
    /// Opens (or initializes) a results directory for `plan`. A directory
    /// that already holds a different plan is refused.
    pub fn open(dir: &Path, plan: &ExperimentPlan, expanded: &ExpandedPlan) -> Result<Self, HarnessError> {
        fs::create_dir_all(dir.join(TRACE_DIR)).map_err(|e| HarnessError::io(dir, e))?;
        let manifest_path = dir.join(MANIFEST);
        let digest = plan.digest();
        if manifest_path.exists() {
            let existing = read_manifest(dir)?;
            if existing.plan_digest != digest {
                return Err(HarnessError::Plan(format!(
                    "{} holds results for plan {}, not {}",
                    dir.display(),
                    existing.plan_digest,
                    digest
                )));
            }
        } else {
            let manifest = Manifest {
                plan_digest: digest,
                toolkit_version: crate::TOOLKIT_VERSION.to_string(),
                plan: plan.clone(),
                points: expanded.points.clone(),
                runs: expanded
                    .runs
                    .iter()
                    .map(|r| ManifestRun {
                        run_id: r.run_id.clone(),
                        point: r.point,
                        attack: r.attack,
                        repetition: r.repetition,
                        seed: r.seed,
                    })
                    .collect(),
            };
            let json = serde_json::to_string_pretty(&manifest)?;
            fs::write(&manifest_path, json).map_err(|e| HarnessError::io(&manifest_path, e))?;
        }
        Ok(Store { dir: dir.to_path_buf() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Latest record per run id.
    pub fn load_index(&self) -> Result<HashMap<String, RunRecord>, HarnessError> {
        load_index(&self.dir)
    }

    /// Loads a stored trace and checks its content digest.
    pub fn load_verified(&self, digest: &str) -> Option<TimingTrace> {
        load_verified(&self.dir, digest)
    }

    pub fn write_trace(&self, trace: &TimingTrace) -> Result<String, HarnessError> {
        let digest = trace.digest();
        trace.write_files(&self.dir.join(TRACE_DIR), &digest)?;
        Ok(digest)
    }

    pub fn append(&self, record: &RunRecord) -> Result<(), HarnessError> {
        let path = self.dir.join(RUN_INDEX);
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| HarnessError::io(&path, e))?;
        let line = serde_json::to_string(record)?;
        writeln!(f, "{line}").map_err(|e| HarnessError::io(&path, e))
    }

    pub fn write_file(&self, rel: &str, contents: &str) -> Result<(), HarnessError> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| HarnessError::io(parent, e))?;
        }
        fs::write(&path, contents).map_err(|e| HarnessError::io(&path, e))
    }
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, HarnessError> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub(crate) fn load_index(dir: &Path) -> Result<HashMap<String, RunRecord>, HarnessError> {
    let path = dir.join(RUN_INDEX);
    let mut out = HashMap::new();
    let text = match fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(out),
        Err(e) => return Err(HarnessError::io(&path, e)),
    };
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        // A torn final line from an interrupted run is ignored; the run is redone.
        if let Ok(rec) = serde_json::from_str::<RunRecord>(line) {
            out.insert(rec.run_id().to_string(), rec);
        }
    }
    Ok(out)
}

pub(crate) fn load_verified(dir: &Path, digest: &str) -> Option<TimingTrace> {
    let path = dir.join(TRACE_DIR).join(format!("{digest}.csv"));
    let trace = TimingTrace::read_files(&path).ok()?;
    (trace.digest() == digest).then_some(trace)
}

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::time::Instant;

use log::{debug, info, warn};
use serde::{Deserialize, Serialize};

use super::plan::{expand_plan, ExperimentPlan, GridPoint, RunDescriptor};
use super::store::{self, RunRecord, Store};
use super::{report, HarnessError};
use crate::attackchan::AttackPlan;
use crate::par::Execution;
use crate::simkernel::{simulate_trace, TimingTrace, ValidatedConfig};
use crate::timestats::{assess, AttackVerdict};

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub execution: Execution,
    /// Results directory; `None` keeps everything in memory.
    pub out_dir: Option<PathBuf>,
    /// Histogram bins per grid point.
    pub hist_bins: usize,
    /// When false, nothing is simulated or written: only runs already stored
    /// in `out_dir` are used and the result is partial if any are missing.
    pub execute: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            execution: Execution::default(),
            out_dir: None,
            hist_bins: 40,
            execute: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PointResult {
    pub point: GridPoint,
    /// Digests of the with-attack traces, in repetition order.
    pub with_digests: Vec<String>,
    pub without_digests: Vec<String>,
    #[serde(skip)]
    pub with_attack: Vec<TimingTrace>,
    #[serde(skip)]
    pub without_attack: Vec<TimingTrace>,
    /// `None` when a repetition is missing or assessment failed.
    pub verdict: Option<AttackVerdict>,
    pub errors: Vec<String>,
    /// Simulation wall-clock time spent on this point in this invocation.
    pub runtime_ms: u64,
}

impl PointResult {
    pub fn is_complete(&self) -> bool {
        self.verdict.is_some()
    }

    pub fn feasible(&self) -> Option<bool> {
        self.verdict.as_ref().map(|v| v.feasible)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanResult {
    pub plan_digest: String,
    pub toolkit_version: String,
    pub alpha: f64,
    pub repetitions: u32,
    pub points: Vec<PointResult>,
    pub executed_runs: usize,
    pub reused_runs: usize,
    /// `(run_id, error)` for each run that produced no trace.
    pub failed_runs: Vec<(String, String)>,
    pub partial: bool,
}

impl PlanResult {
    pub fn feasible_points(&self) -> impl Iterator<Item = &PointResult> {
        self.points.iter().filter(|p| p.feasible() == Some(true))
    }

    /// Digests of every trace, in plan order.
    pub fn trace_digests(&self) -> Vec<&str> {
        self.points
            .iter()
            .flat_map(|p| p.without_digests.iter().chain(&p.with_digests))
            .map(String::as_str)
            .collect()
    }
}

struct Outcome {
    index: usize,
    trace: Result<TimingTrace, String>,
    elapsed_ms: u64,
}

/// Executes (or resumes) a plan, assesses every grid point and, with an
/// output directory, persists traces, the run index, verdicts, histograms
/// and the report.
///
/// All point configurations are validated before anything is written. A
/// failing run is recorded and the remaining runs proceed; the result is
/// then marked partial.
pub fn run_plan(plan: &ExperimentPlan, opts: &RunOptions) -> Result<PlanResult, HarnessError> {
    let expanded = expand_plan(plan)?;
    if !(plan.alpha > 0.0 && plan.alpha < 1.0) {
        return Err(HarnessError::Plan(format!(
            "alpha must lie in (0, 1), got {}",
            plan.alpha
        )));
    }
    let validated: Vec<ValidatedConfig> = expanded
        .runs
        .iter()
        .map(|r| r.config.clone().validate())
        .collect::<Result<_, _>>()?;

    let store = match &opts.out_dir {
        Some(dir) => Some(Store::open(dir, plan, &expanded)?),
        None => None,
    };
    let index = match &store {
        Some(s) => s.load_index()?,
        None => HashMap::new(),
    };

    let mut traces: Vec<Option<TimingTrace>> = vec![None; expanded.runs.len()];
    let mut failures: HashMap<usize, String> = HashMap::new();
    let mut pending = Vec::new();
    for (i, run) in expanded.runs.iter().enumerate() {
        let reused = match (index.get(&run.run_id), &store) {
            (Some(RunRecord::Ok { trace_digest, .. }), Some(s)) => s.load_verified(trace_digest),
            _ => None,
        };
        match reused {
            Some(t) => traces[i] = Some(t),
            None => pending.push(i),
        }
    }
    let reused_runs = expanded.runs.len() - pending.len();
    info!(
        "plan {}: {} runs, {} reused, {} to execute",
        plan.digest(),
        expanded.runs.len(),
        reused_runs,
        if opts.execute { pending.len() } else { 0 }
    );

    let mut runtime = vec![0u64; expanded.points.len()];
    let mut executed_runs = 0;
    if opts.execute && !pending.is_empty() {
        let attack = AttackPlan::continuous(plan.burst);
        let outcomes = execute(
            opts.execution,
            &pending,
            &expanded.runs,
            &validated,
            &attack,
            store.as_ref(),
        )?;
        executed_runs = outcomes.len();
        for o in outcomes {
            runtime[expanded.runs[o.index].point] += o.elapsed_ms;
            match o.trace {
                Ok(t) => traces[o.index] = Some(t),
                Err(e) => {
                    warn!("run {} failed: {e}", expanded.runs[o.index].run_id);
                    failures.insert(o.index, e);
                }
            }
        }
    } else {
        for &i in &pending {
            if let Some(RunRecord::Failed { error, .. }) = index.get(&expanded.runs[i].run_id) {
                failures.insert(i, error.clone());
            }
        }
    }

    let mut failed_runs: Vec<(usize, String)> = failures.into_iter().collect();
    failed_runs.sort();
    let mut points = assemble(plan, &expanded.points, &expanded.runs, traces, &runtime);
    for (i, e) in &failed_runs {
        let run = &expanded.runs[*i];
        points[run.point].errors.push(format!(
            "{} run, repetition {} ({}): {e}",
            if run.attack { "attack" } else { "no-attack" },
            run.repetition,
            run.run_id
        ));
    }

    let partial = points.iter().any(|p| !p.is_complete());
    let result = PlanResult {
        plan_digest: plan.digest(),
        toolkit_version: crate::TOOLKIT_VERSION.to_string(),
        alpha: plan.alpha,
        repetitions: plan.repetitions,
        points,
        executed_runs,
        reused_runs,
        failed_runs: failed_runs
            .into_iter()
            .map(|(i, e)| (expanded.runs[i].run_id.clone(), e))
            .collect(),
        partial,
    };

    // A read-only load leaves the directory untouched.
    if let (Some(s), true) = (&store, opts.execute) {
        s.write_file(store::VERDICTS, &verdicts_csv(&result))?;
        report::write_report(&result, s.dir(), opts.hist_bins)?;
    }
    Ok(result)
}

/// Runs `pending` on the worker pool. With a store, a single writer thread
/// persists each trace and its index record as soon as it is produced, so
/// an interrupted plan resumes where it stopped.
fn execute(
    execution: Execution,
    pending: &[usize],
    runs: &[RunDescriptor],
    validated: &[ValidatedConfig],
    attack: &AttackPlan,
    store: Option<&Store>,
) -> Result<Vec<Outcome>, HarnessError> {
    let simulate = |i: usize| {
        let start = Instant::now();
        let run = &runs[i];
        let trace = simulate_trace(&validated[i], run.attack.then_some(attack)).map_err(|e| e.to_string());
        debug!("run {} done in {:?}", run.run_id, start.elapsed());
        Outcome {
            index: i,
            trace,
            elapsed_ms: start.elapsed().as_millis() as u64,
        }
    };

    let Some(store) = store else {
        return Ok(execution.map(pending, |&i| simulate(i)));
    };

    std::thread::scope(|scope| {
        let (tx, rx) = mpsc::channel::<(String, Result<TimingTrace, String>)>();
        let writer = scope.spawn(move || -> Result<(), HarnessError> {
            for (run_id, trace) in rx {
                let record = match trace {
                    Ok(t) => RunRecord::Ok {
                        run_id,
                        trace_digest: store.write_trace(&t)?,
                    },
                    Err(error) => RunRecord::Failed { run_id, error },
                };
                store.append(&record)?;
            }
            Ok(())
        });
        let outcomes = execution.map(pending, |&i| {
            let o = simulate(i);
            // A closed channel means the writer failed; its error is reported below.
            let _ = tx.send((runs[i].run_id.clone(), o.trace.clone()));
            o
        });
        drop(tx);
        writer.join().expect("writer thread panicked")?;
        Ok(outcomes)
    })
}

fn assemble(
    plan: &ExperimentPlan,
    grid: &[GridPoint],
    runs: &[RunDescriptor],
    mut traces: Vec<Option<TimingTrace>>,
    runtime: &[u64],
) -> Vec<PointResult> {
    let reps = plan.repetitions as usize;
    let mut points: Vec<PointResult> = grid
        .iter()
        .map(|&point| PointResult {
            point,
            with_digests: Vec::new(),
            without_digests: Vec::new(),
            with_attack: Vec::new(),
            without_attack: Vec::new(),
            verdict: None,
            errors: Vec::new(),
            runtime_ms: runtime[point.index],
        })
        .collect();
    // Runs are ordered by repetition within a point, so pushing keeps the pairing.
    for (run, slot) in runs.iter().zip(traces.iter_mut()) {
        let p = &mut points[run.point];
        if let Some(t) = slot.take() {
            if run.attack {
                p.with_digests.push(t.digest());
                p.with_attack.push(t);
            } else {
                p.without_digests.push(t.digest());
                p.without_attack.push(t);
            }
        }
    }
    for p in &mut points {
        if p.with_attack.len() == reps && p.without_attack.len() == reps {
            match assess(&p.with_attack, &p.without_attack, plan.alpha) {
                Ok(v) => p.verdict = Some(v),
                Err(e) => p.errors.push(format!("assessment failed: {e}")),
            }
        } else {
            p.errors.push(format!(
                "incomplete: {}/{} attack and {}/{} no-attack runs available",
                p.with_attack.len(),
                reps,
                p.without_attack.len(),
                reps
            ));
        }
    }
    points
}

/// Rebuilds the result of a plan stored in `dir` without simulating.
pub fn load_plan_result(dir: &Path) -> Result<PlanResult, HarnessError> {
    let manifest = store::read_manifest(dir)?;
    let opts = RunOptions {
        out_dir: Some(dir.to_path_buf()),
        execute: false,
        ..Default::default()
    };
    run_plan(&manifest.plan, &opts)
}

/// One row per grid point. Trace digests of a set are joined with `;`.
pub fn verdicts_csv(result: &PlanResult) -> String {
    let mut out = String::from(
        "point,switch_duration_ns,tick_frequency,benign_boards,speed_exponent,status,feasible,reproducible,\
         min_p,max_p,mean_shift_ticks,with_traces,without_traces\n",
    );
    for p in &result.points {
        let g = &p.point;
        let (status, feasible, reproducible, min_p, max_p, shift) = match &p.verdict {
            Some(v) => (
                "complete",
                v.feasible.to_string(),
                v.reproducible.to_string(),
                format!("{:e}", v.min_p()),
                format!("{:e}", v.max_p()),
                format!("{}", v.mean_shift_ticks),
            ),
            None => (
                "incomplete",
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
            ),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{status},{feasible},{reproducible},{min_p},{max_p},{shift},{},{}",
            g.index,
            g.switch_duration,
            g.tick_frequency,
            g.benign_boards,
            g.speed_exponent,
            p.with_digests.join(";"),
            p.without_digests.join(";"),
        );
    }
    out
}

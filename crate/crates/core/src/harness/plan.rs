use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::attackchan::BurstSpec;
use crate::digest::{short_digest, split_seed};
use crate::simkernel::{apply_overrides, BoardRole, ConfigError, SimConfig, VirtualBoardSpec};
use crate::timestats::DEFAULT_ALPHA;

/// Hard cap on the number of simulation runs one plan may expand to.
pub const MAX_RUNS: u64 = 100_000;

/// A parameter grid over a template configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    /// Enforced switch durations, ns.
    pub switch_durations: Vec<u64>,
    pub tick_frequencies: Vec<u64>,
    pub benign_board_counts: Vec<usize>,
    pub speed_exponents: Vec<u32>,
    pub repetitions: u32,
    /// Virtual ns per run.
    pub sim_duration: u64,
    /// Master seed; every run seed is split from it.
    pub seed: u64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub burst: BurstSpec,
    pub template: SimConfig,
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        ExperimentPlan {
            switch_durations: vec![10_000_000, 10_000, 1_000],
            tick_frequencies: vec![10, 1000],
            benign_board_counts: vec![1, 50],
            speed_exponents: vec![0, 1, 2],
            repetitions: 3,
            sim_duration: 15 * 60 * 1_000_000_000,
            seed: 2021,
            alpha: DEFAULT_ALPHA,
            burst: BurstSpec::default(),
            template: SimConfig::calibrated_default(),
        }
    }
}

impl ExperimentPlan {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(ConfigError::Parse(e.to_string())))
    }

    pub fn to_toml(&self) -> Result<String, HarnessError> {
        toml::to_string_pretty(self).map_err(|e| HarnessError::Config(ConfigError::Parse(e.to_string())))
    }

    pub fn with_overrides(&self, overrides: &[(String, String)]) -> Result<Self, HarnessError> {
        let parse = |e: String| HarnessError::Config(ConfigError::Parse(e));
        let v = toml::Value::try_from(self).map_err(|e| parse(e.to_string()))?;
        let v = apply_overrides(v, overrides)?;
        v.try_into().map_err(|e: toml::de::Error| parse(e.to_string()))
    }

    pub fn digest(&self) -> String {
        short_digest(&serde_json::to_vec(self).expect("plan serializes"))
    }
}

/// One combination of grid parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridPoint {
    pub index: usize,
    pub switch_duration: u64,
    pub tick_frequency: u64,
    pub benign_boards: usize,
    pub speed_exponent: u32,
}

impl GridPoint {
    /// File-name friendly key.
    pub fn key(&self) -> String {
        format!(
            "p{:03}-sw{}ns-tick{}-benign{}-n{}",
            self.index, self.switch_duration, self.tick_frequency, self.benign_boards, self.speed_exponent
        )
    }
}

/// One simulation to execute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunDescriptor {
    pub run_id: String,
    pub point: usize,
    pub attack: bool,
    pub repetition: u32,
    pub seed: u64,
    pub config: SimConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpandedPlan {
    pub points: Vec<GridPoint>,
    pub runs: Vec<RunDescriptor>,
}

/// Expands the grid in lexicographic order (switch duration, tick
/// frequency, benign count, speed exponent; each ascending). Each point
/// yields `repetitions` pairs of (without, with) runs.
///
/// Seeds: `split_seed(plan.seed, [switch_duration, tick_frequency,
/// benign_boards, speed_exponent, attack, repetition])`, keyed by parameter
/// values so a point keeps its seeds when the grid around it changes.
pub fn expand_plan(plan: &ExperimentPlan) -> Result<ExpandedPlan, HarnessError> {
    let sw = sorted(&plan.switch_durations, "switch_durations")?;
    let tf = sorted(&plan.tick_frequencies, "tick_frequencies")?;
    let bb = sorted(&plan.benign_board_counts, "benign_board_counts")?;
    let ne = sorted(&plan.speed_exponents, "speed_exponents")?;
    if plan.repetitions == 0 {
        return Err(HarnessError::Plan("repetitions must be >= 1".into()));
    }
    let grid = [sw.len(), tf.len(), bb.len(), ne.len()]
        .iter()
        .try_fold(1u64, |acc, &n| acc.checked_mul(n as u64));
    let total = grid.and_then(|g| g.checked_mul(2 * plan.repetitions as u64));
    match total {
        Some(t) if t <= MAX_RUNS => {}
        _ => return Err(HarnessError::Plan(format!("grid expands to more than {MAX_RUNS} runs"))),
    }

    let mut points = Vec::new();
    let mut runs = Vec::new();
    for &s in &sw {
        for &t in &tf {
            for &b in &bb {
                for &n in &ne {
                    let point = GridPoint {
                        index: points.len(),
                        switch_duration: s,
                        tick_frequency: t,
                        benign_boards: b,
                        speed_exponent: n,
                    };
                    let base = point_config(plan, &point);
                    for rep in 0..plan.repetitions {
                        for attack in [false, true] {
                            let seed = split_seed(
                                plan.seed,
                                &[
                                    ("switch_duration", s),
                                    ("tick_frequency", t),
                                    ("benign_boards", b as u64),
                                    ("speed_exponent", n as u64),
                                    ("attack", attack as u64),
                                    ("repetition", rep as u64),
                                ],
                            );
                            let mut config = base.clone();
                            config.seed = seed;
                            let id_src = format!("{}|{}|{}|{:?}", config.digest(), seed, attack, plan.burst);
                            runs.push(RunDescriptor {
                                run_id: short_digest(id_src.as_bytes()),
                                point: point.index,
                                attack,
                                repetition: rep,
                                seed,
                                config,
                            });
                        }
                    }
                    points.push(point);
                }
            }
        }
    }
    Ok(ExpandedPlan { points, runs })
}

fn sorted<T: Ord + Copy>(v: &[T], name: &str) -> Result<Vec<T>, HarnessError> {
    if v.is_empty() {
        return Err(HarnessError::Plan(format!("{name} must not be empty")));
    }
    Ok(v.iter().copied().collect::<BTreeSet<_>>().into_iter().collect())
}

/// Template with the grid parameters applied. The benign boards of the
/// template are replaced by `benign_boards` copies of the first one, placed
/// where that first benign board was; ids are renumbered in schedule order.
pub fn point_config(plan: &ExperimentPlan, point: &GridPoint) -> SimConfig {
    let mut c = plan.template.clone();
    c.enforced_switch_duration = point.switch_duration;
    c.tick_frequency = point.tick_frequency;
    c.speed_exponent = point.speed_exponent;
    c.sim_duration = plan.sim_duration;
    c.boards = expand_benign(&c.boards, point.benign_boards);
    c
}

fn expand_benign(boards: &[VirtualBoardSpec], count: usize) -> Vec<VirtualBoardSpec> {
    let Some(first) = boards.iter().position(|b| b.role == BoardRole::Benign) else {
        return boards.to_vec();
    };
    let proto = boards[first].clone();
    let mut out = Vec::with_capacity(boards.len() + count);
    for (i, b) in boards.iter().enumerate() {
        if i == first {
            out.extend(std::iter::repeat_n(proto.clone(), count));
        } else if b.role != BoardRole::Benign {
            out.push(b.clone());
        }
    }
    for (i, b) in out.iter_mut().enumerate() {
        b.id = i as u16;
    }
    out
}

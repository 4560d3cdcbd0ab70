#![allow(dead_code)]

use std::sync::OnceLock;

use covsim_core::harness::{run_plan, ExperimentPlan, PlanResult, RunOptions};
use covsim_core::simkernel::{standard_boards, JitterKind, JitterModel, SimConfig};
use proptest::prelude::*;

/// The default 36-point plan, executed once per test binary.
pub fn default_result() -> &'static PlanResult {
    static RESULT: OnceLock<PlanResult> = OnceLock::new();
    RESULT.get_or_init(|| run_plan(&ExperimentPlan::default(), &RunOptions::default()).expect("default plan runs"))
}

/// Expected verdict of a default-grid point: open only at full speed with
/// microsecond padding.
pub fn expected_feasible(switch_duration: u64, speed_exponent: u32) -> bool {
    speed_exponent == 0 && (switch_duration == 10_000 || switch_duration == 1_000)
}

/// A cheap plan for property tests: 2 virtual minutes per run.
pub fn small_plan(seed: u64) -> ExperimentPlan {
    ExperimentPlan {
        tick_frequencies: vec![10],
        benign_board_counts: vec![1],
        speed_exponents: vec![0, 1],
        sim_duration: 120_000_000_000,
        seed,
        ..ExperimentPlan::default()
    }
}

/// Known no-attack configuration for the calibration round trip. The tail
/// is switched off so the reference is drawn from the fitted family.
pub fn calibration_truth() -> SimConfig {
    let mut c = SimConfig::calibrated_default();
    c.jitter = JitterModel {
        kind: JitterKind::TruncatedNormal,
        magnitude: 4_000,
        tail_probability: 0.0,
        tail_magnitude: 0,
    };
    c.seed = 99;
    c.sim_duration = 4 * 3_600_000_000_000;
    c
}

/// Template handed to the fit: right shape, wrong values.
pub fn calibration_template() -> SimConfig {
    let mut c = calibration_truth();
    c.base_switch_cost = 1;
    c.jitter.magnitude = 1;
    c.seed = 5;
    c
}

/// Physical-board-style configuration: deltas around 3.6e8 ticks.
pub fn physical_style() -> SimConfig {
    let mut c = SimConfig::calibrated_default();
    c.base_switch_cost = 10_000_000;
    c.jitter = JitterModel {
        magnitude: 200_000,
        ..JitterModel::default()
    };
    c.seed = 360;
    c
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Four 1 ms boards and 40 major frames: fast enough for property tests.
pub fn small_config() -> SimConfig {
    let mut c = SimConfig::calibrated_default();
    for b in &mut c.boards {
        b.time_slice = 1_000_000;
        b.tse_offset = 100_000;
    }
    c.sim_duration = 40 * 4_200_000;
    c
}

pub fn jitter_strategy() -> impl Strategy<Value = JitterModel> {
    (0u8..3, 0u64..6_000, 0u32..20_000, 0u64..10_000).prop_map(|(k, m, ppm, t)| JitterModel {
        kind: match k {
            0 => JitterKind::None,
            1 => JitterKind::Uniform,
            _ => JitterKind::TruncatedNormal,
        },
        magnitude: m,
        tail_probability: ppm as f64 / 1e6,
        tail_magnitude: t,
    })
}

pub fn masked_config() -> impl Strategy<Value = (SimConfig, u32)> {
    (
        0u32..3,
        1_000u64..40_000,
        jitter_strategy(),
        0usize..3,
        0u64..2_000,
        any::<u64>(),
        1u32..200,
    )
        .prop_map(|(n, base, jitter, benign, extra, seed, burst)| {
            let mut c = small_config();
            c.boards = standard_boards(benign);
            for b in &mut c.boards {
                b.time_slice = 1_000_000;
                b.tse_offset = 100_000;
            }
            c.speed_exponent = n;
            c.base_switch_cost = base;
            c.jitter = jitter;
            c.seed = seed;
            c.enforced_switch_duration = c.worst_case_switch_cost() + extra;
            c.sim_duration = 40 * (c.boards.len() as u64) * (1_000_000 + c.enforced_switch_duration);
            (c, burst)
        })
}

//! Moment-matching fit of the no-attack cost model to a reference trace.
//!
//! Without an attack and with no switch clamped by the padding, one receiver
//! period is `sum(slices) + 2^N * sum_i (base + J_i)` virtual ns over the `n`
//! switches of a major frame, read at `k = f / (1e9 * 2^N)` ticks per ns:
//!
//! ```text
//! mean = k * (sum(slices) + n * 2^N * (base + E[J]))
//! var  = k^2 * n * 4^N * Var[J]
//! ```
//!
//! The variance fixes the jitter core magnitude (the template's tail is kept
//! as is), then the mean fixes `base_switch_cost`. The fitted configuration
//! is then simulated and its moments compared with the reference.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::digest::split_seed;
use crate::simkernel::{simulate_trace, JitterKind, JitterModel, JitterSampler, SimConfig, TimingTrace};
use crate::timestats::summarize;

/// Minimum length, in major frames, of the verification simulation.
pub const MIN_VERIFY_FRAMES: u64 = 20_000;

/// Relative tolerance on the verified moments.
const TOLERANCE: f64 = 0.05;

/// Below this many ticks² the reference is treated as constant; counter
/// quantization alone contributes at most 1/4.
const QUANTIZATION_FLOOR: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "diagnostic", rename_all = "snake_case")]
pub enum CalibrationDiagnostic {
    /// Reference variance is below what the fixed jitter tail alone produces.
    BelowFloor { reference_variance: f64, floor: f64 },
    /// The reference mean is shorter than the scheduled slices allow.
    NegativeBase { implied_base_ns: f64 },
    /// Fitted switches are shorter than the enforced duration, so the
    /// unclamped moment equations do not hold.
    Clamped { enforced_ns: u64, switch_ns: u64 },
    OutOfTolerance {
        moment: String,
        reference: f64,
        fitted: f64,
        relative_error: f64,
    },
}

impl fmt::Display for CalibrationDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CalibrationDiagnostic::BelowFloor {
                reference_variance,
                floor,
            } => write!(
                f,
                "unattainable fit: reference variance {reference_variance:.3e} ticks^2 is below the model floor \
                 {floor:.3e} ticks^2 set by the jitter tail; jitter core set to 0"
            ),
            CalibrationDiagnostic::NegativeBase { implied_base_ns } => write!(
                f,
                "unattainable fit: reference mean implies a switch cost of {implied_base_ns:.1} ns; \
                 the configured time slices are too long for this reference"
            ),
            CalibrationDiagnostic::Clamped { enforced_ns, switch_ns } => write!(
                f,
                "fitted switch cost {switch_ns} ns is below the enforced duration {enforced_ns} ns; \
                 padding hides part of the fitted model"
            ),
            CalibrationDiagnostic::OutOfTolerance {
                moment,
                reference,
                fitted,
                relative_error,
            } => write!(
                f,
                "fitted {moment} {fitted:.6e} differs from reference {reference:.6e} by {:.2}%",
                relative_error * 100.0
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFit {
    pub config: SimConfig,
    pub reference_samples: usize,
    pub reference_mean: f64,
    pub reference_variance: f64,
    /// Moments of the verification simulation.
    pub fitted_mean: f64,
    pub fitted_variance: f64,
    pub verify_samples: usize,
    pub diagnostics: Vec<CalibrationDiagnostic>,
}

impl CalibrationFit {
    pub fn is_clean(&self) -> bool {
        self.diagnostics.is_empty()
    }
}

/// Fits `base_switch_cost` and the jitter magnitude of `template` to a
/// no-attack `reference` trace. The counter frequency (and the speed
/// exponent, when recorded) are taken from the reference metadata.
pub fn fit_config(reference: &TimingTrace, template: &SimConfig) -> Result<CalibrationFit, HarnessError> {
    if reference.len() < 2 {
        return Err(HarnessError::Calibration(format!(
            "reference trace needs at least 2 samples, has {}",
            reference.len()
        )));
    }
    if reference.metadata.counter_freq == 0 {
        return Err(HarnessError::Calibration("reference counter_freq must be > 0".into()));
    }
    let summary = summarize(&reference.deltas(), 1)?;
    let ref_mean = summary.mean;
    let ref_var = summary.variance.unwrap_or(0.0);

    let mut cfg = template.clone();
    cfg.counter_freq = reference.metadata.counter_freq;
    if let Some(n) = reference.metadata.speed_exponent {
        cfg.speed_exponent = n;
    }
    let s = cfg.speed_scale() as f64;
    let k = cfg.counter_freq as f64 / (1e9 * s);
    let n = cfg.boards.len() as f64;
    let slices: u64 = cfg.boards.iter().map(|b| b.time_slice).sum();
    let mut diagnostics = Vec::new();

    // Per-draw jitter variance in unscaled ns^2.
    let draw_var = ref_var / (k * k * n * s * s);
    cfg.jitter = if ref_var <= QUANTIZATION_FLOOR {
        JitterModel::none()
    } else {
        let kind = match template.jitter.kind {
            JitterKind::None => JitterKind::TruncatedNormal,
            other => other,
        };
        let tail = JitterModel {
            kind,
            magnitude: 0,
            ..template.jitter
        };
        let tail_var = JitterSampler::new(&tail).tail_variance();
        let core_var = draw_var - tail_var;
        let magnitude = if core_var < 0.0 {
            diagnostics.push(CalibrationDiagnostic::BelowFloor {
                reference_variance: ref_var,
                floor: tail_var * k * k * n * s * s,
            });
            0
        } else {
            match kind {
                JitterKind::Uniform => (-1.0 + (1.0 + 12.0 * core_var).sqrt()).round() as u64,
                _ => (12.0 * (core_var - 1.0 / 12.0).max(0.0).sqrt()).round() as u64,
            }
        };
        JitterModel { magnitude, ..tail }
    };

    let jitter_mean = JitterSampler::new(&cfg.jitter).mean();
    let base = (ref_mean / k - slices as f64) / (n * s) - jitter_mean;
    if base < 0.0 {
        diagnostics.push(CalibrationDiagnostic::NegativeBase { implied_base_ns: base });
    }
    cfg.base_switch_cost = base.max(0.0).round() as u64;

    let min_switch = cfg.speed_scale() * cfg.base_switch_cost;
    let enforced = (0..cfg.boards.len())
        .map(|i| cfg.enforced_for(i, (i + 1) % cfg.boards.len()))
        .max()
        .unwrap_or(0);
    if enforced > min_switch {
        diagnostics.push(CalibrationDiagnostic::Clamped {
            enforced_ns: enforced,
            switch_ns: min_switch,
        });
    }

    let validated = cfg.clone().validate()?;
    let mut verify = cfg.clone();
    verify.sim_duration = verify
        .sim_duration
        .max(MIN_VERIFY_FRAMES.saturating_mul(validated.major_frame_ns()));
    verify.seed = split_seed(cfg.seed, &[("calibration-verify", 0)]);
    let trace = simulate_trace(&verify.validate()?, None)?;
    let fitted = summarize(&trace.deltas(), 1)?;
    let fit_mean = fitted.mean;
    let fit_var = fitted.variance.unwrap_or(0.0);

    let mean_err = (fit_mean - ref_mean).abs() / ref_mean;
    if mean_err > TOLERANCE {
        diagnostics.push(CalibrationDiagnostic::OutOfTolerance {
            moment: "mean".into(),
            reference: ref_mean,
            fitted: fit_mean,
            relative_error: mean_err,
        });
    }
    // One tick^2 of slack absorbs counter quantization on near-constant traces.
    if (fit_var - ref_var).abs() > TOLERANCE * ref_var + 1.0 {
        diagnostics.push(CalibrationDiagnostic::OutOfTolerance {
            moment: "variance".into(),
            reference: ref_var,
            fitted: fit_var,
            relative_error: if ref_var > 0.0 {
                (fit_var - ref_var).abs() / ref_var
            } else {
                f64::INFINITY
            },
        });
    }

    Ok(CalibrationFit {
        config: cfg,
        reference_samples: reference.len(),
        reference_mean: ref_mean,
        reference_variance: ref_var,
        fitted_mean: fit_mean,
        fitted_variance: fit_var,
        verify_samples: trace.len(),
        diagnostics,
    })
}

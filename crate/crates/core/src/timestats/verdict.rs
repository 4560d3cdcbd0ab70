use serde::{Deserialize, Serialize};

use super::welch::{check_alpha, welch_t_test, TTestResult};
use super::StatsError;
use crate::simkernel::TimingTrace;

/// Channel-feasibility decision for one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackVerdict {
    pub config_digest: String,
    /// One test per (with, without) repetition pair; group a is "with".
    pub repetitions: Vec<TTestResult>,
    /// Every repetition rejected equal means.
    pub feasible: bool,
    /// Every repetition reached the same decision.
    pub reproducible: bool,
    /// Mean over repetitions of `mean(with) - mean(without)`.
    pub mean_shift_ticks: f64,
    pub alpha: f64,
}

impl AttackVerdict {
    pub fn min_p(&self) -> f64 {
        self.repetitions.iter().map(|r| r.p_value).fold(f64::INFINITY, f64::min)
    }

    pub fn max_p(&self) -> f64 {
        self.repetitions
            .iter()
            .map(|r| r.p_value)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Pairs repetition `i` of each set, runs Welch's test per pair and
/// aggregates. All traces must come from the same configuration (equal
/// config digests); `with_attack` traces must carry the attack flag and
/// `without_attack` traces must not.
pub fn assess(
    with_attack: &[TimingTrace],
    without_attack: &[TimingTrace],
    alpha: f64,
) -> Result<AttackVerdict, StatsError> {
    check_alpha(alpha)?;
    if with_attack.is_empty() {
        return Err(StatsError::NoRepetitions);
    }
    if with_attack.len() != without_attack.len() {
        return Err(StatsError::RepetitionMismatch {
            with: with_attack.len(),
            without: without_attack.len(),
        });
    }
    let digest = &with_attack[0].metadata.config_digest;
    for t in with_attack.iter().chain(without_attack) {
        if &t.metadata.config_digest != digest {
            return Err(StatsError::DigestMismatch {
                expected: digest.clone(),
                found: t.metadata.config_digest.clone(),
            });
        }
    }
    if with_attack.iter().any(|t| !t.metadata.attack) || without_attack.iter().any(|t| t.metadata.attack) {
        return Err(StatsError::AttackFlag);
    }

    let mut repetitions = Vec::with_capacity(with_attack.len());
    for (w, wo) in with_attack.iter().zip(without_attack) {
        repetitions.push(welch_t_test(&w.deltas_f64(), &wo.deltas_f64(), alpha)?);
    }
    let rejects = repetitions.iter().filter(|r| r.reject).count();
    let shift = repetitions.iter().map(|r| r.mean_a - r.mean_b).sum::<f64>() / repetitions.len() as f64;
    Ok(AttackVerdict {
        config_digest: digest.clone(),
        feasible: rejects == repetitions.len(),
        reproducible: rejects == 0 || rejects == repetitions.len(),
        mean_shift_ticks: shift,
        alpha,
        repetitions,
    })
}

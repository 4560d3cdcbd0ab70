//! Statistics for the with/without-attack comparison.
//!
//! Welch's unequal-variance t-test (two-sided) is the decision procedure; the
//! permutation test is kept as an independent oracle for it.

mod permutation;
mod special;
mod summary;
mod verdict;
mod welch;

use thiserror::Error;

pub use permutation::{permutation_test, MIN_PERMUTATIONS};
pub use special::{inc_beta, ln_gamma, student_t_cdf, student_t_two_sided};
pub use summary::{mean_variance, summarize, Histogram, SampleSummary};
pub use verdict::{assess, AttackVerdict};
pub use welch::{welch_t_test, TTestResult};

/// Default significance level (95% confidence).
pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("empty sample")]
    Empty,
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error("need at least {needed} permutations, got {got}")]
    TooFewIterations { needed: usize, got: usize },
    #[error("no repetitions to assess")]
    NoRepetitions,
    #[error("{with} with-attack traces but {without} without-attack traces")]
    RepetitionMismatch { with: usize, without: usize },
    #[error("config digest mismatch: expected {expected}, found {found}")]
    DigestMismatch { expected: String, found: String },
    #[error("with-attack traces must carry the attack flag and without-attack traces must not")]
    AttackFlag,
}

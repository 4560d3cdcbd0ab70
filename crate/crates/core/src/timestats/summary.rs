use serde::{Deserialize, Serialize};

use super::StatsError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `counts.len() + 1` edges; the last bin is closed on the right.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    /// Equal-width bins over `[lo, hi]`. A zero-width range gets unit width.
    pub fn with_range(samples: &[u64], bins: usize, lo: u64, hi: u64) -> Self {
        let bins = bins.max(1);
        let width = if hi > lo {
            (hi - lo) as f64 / bins as f64
        } else {
            1.0 / bins as f64
        };
        let edges = (0..=bins).map(|i| lo as f64 + width * i as f64).collect();
        let mut counts = vec![0u64; bins];
        for &x in samples {
            let i = if x <= lo {
                0
            } else {
                (((x - lo) as f64 / width) as usize).min(bins - 1)
            };
            counts[i] += 1;
        }
        Histogram { edges, counts }
    }

    pub fn occupied_bins(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub n: usize,
    pub mean: f64,
    /// Unbiased; `None` when `n < 2`.
    pub variance: Option<f64>,
    pub min: u64,
    pub max: u64,
    pub histogram: Histogram,
}

/// Mean and unbiased variance computed exactly in integer arithmetic
/// (`n * sum(x^2) - sum(x)^2` in `u128`), then rounded once to `f64`.
pub fn summarize(samples: &[u64], bins: usize) -> Result<SampleSummary, StatsError> {
    if samples.is_empty() {
        return Err(StatsError::Empty);
    }
    let n = samples.len();
    let min = *samples.iter().min().expect("non-empty");
    let max = *samples.iter().max().expect("non-empty");
    let (mean, variance) = exact_moments(samples, min);
    Ok(SampleSummary {
        n,
        mean,
        variance,
        min,
        max,
        histogram: Histogram::with_range(samples, bins, min, max),
    })
}

fn exact_moments(samples: &[u64], shift: u64) -> (f64, Option<f64>) {
    let n = samples.len() as u128;
    // Shifting by the minimum keeps the sums small.
    let mut s1: u128 = 0;
    let mut s2: Option<u128> = Some(0);
    for &x in samples {
        let d = (x - shift) as u128;
        s1 += d;
        s2 = s2.and_then(|acc| d.checked_mul(d).and_then(|sq| acc.checked_add(sq)));
    }
    let mean = shift as f64 + s1 as f64 / n as f64;
    if n < 2 {
        return (mean, None);
    }
    let var = match s2.and_then(|s2| n.checked_mul(s2)).zip(s1.checked_mul(s1)) {
        Some((ns2, s1sq)) => (ns2 - s1sq) as f64 / (n * (n - 1)) as f64,
        None => {
            let m = s1 as f64 / n as f64;
            samples.iter().map(|&x| ((x - shift) as f64 - m).powi(2)).sum::<f64>() / (n - 1) as f64
        }
    };
    (mean, Some(var))
}

/// Two-pass mean and unbiased variance of real samples.
pub fn mean_variance(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = x.iter().map(|v| (v - mean) * (v - mean)).sum();
    let comp: f64 = x.iter().map(|v| v - mean).sum();
    (mean, (ss - comp * comp / n) / (n - 1.0))
}

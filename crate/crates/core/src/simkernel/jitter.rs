//! Integer-only jitter sampling.
//!
//! The truncated-normal core is an Irwin-Hall sum of twelve 16-bit uniforms,
//! rescaled onto `[0, magnitude]`: mean `magnitude / 2`, standard deviation
//! about `magnitude / 12`. All arithmetic is integer so draws are identical
//! on every platform.

use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;

use super::config::{JitterKind, JitterModel};

const IH_TERMS: u64 = 12;
const IH_MAX: u64 = IH_TERMS * 0xFFFF;

#[derive(Debug, Clone)]
pub struct JitterSampler {
    kind: JitterKind,
    magnitude: u64,
    tail_ppm: u32,
    tail_magnitude: u64,
}

impl JitterSampler {
    pub fn new(model: &JitterModel) -> Self {
        JitterSampler {
            kind: model.kind,
            magnitude: model.magnitude,
            tail_ppm: model.tail_ppm(),
            tail_magnitude: model.tail_magnitude,
        }
    }

    /// One draw, in unscaled ns. Consumes the same amount of randomness for
    /// a given model regardless of the outcome of earlier draws, except for
    /// the tail magnitude, which is drawn only on a tail hit.
    pub fn draw(&self, rng: &mut ChaCha8Rng) -> u64 {
        let core = match self.kind {
            JitterKind::None => return 0,
            JitterKind::Uniform => rng.random_range(0..=self.magnitude),
            JitterKind::TruncatedNormal => {
                let mut sum = 0u64;
                for _ in 0..3 {
                    let w = rng.next_u64();
                    sum += (w & 0xFFFF) + ((w >> 16) & 0xFFFF) + ((w >> 32) & 0xFFFF) + (w >> 48);
                }
                ((self.magnitude as u128 * sum as u128) / IH_MAX as u128) as u64
            }
        };
        let tail = if self.tail_ppm > 0 && rng.random_range(0..1_000_000u32) < self.tail_ppm {
            rng.random_range(0..=self.tail_magnitude)
        } else {
            0
        };
        core + tail
    }

    /// Mean of one draw.
    pub fn mean(&self) -> f64 {
        self.core_mean() + self.tail_mean()
    }

    /// Variance of one draw.
    pub fn variance(&self) -> f64 {
        self.core_variance() + self.tail_variance()
    }

    pub fn core_mean(&self) -> f64 {
        match self.kind {
            JitterKind::None => 0.0,
            // Integer division truncates, shaving half a unit on average.
            JitterKind::TruncatedNormal => (self.magnitude as f64 / 2.0 - 0.5).max(0.0),
            JitterKind::Uniform => self.magnitude as f64 / 2.0,
        }
    }

    pub fn core_variance(&self) -> f64 {
        let m = self.magnitude as f64;
        match self.kind {
            JitterKind::None => 0.0,
            JitterKind::TruncatedNormal => m * m / 144.0 + if m > 0.0 { 1.0 / 12.0 } else { 0.0 },
            JitterKind::Uniform => m * (m + 2.0) / 12.0,
        }
    }

    pub fn tail_mean(&self) -> f64 {
        if self.kind == JitterKind::None {
            return 0.0;
        }
        let q = self.tail_ppm as f64 / 1e6;
        q * self.tail_magnitude as f64 / 2.0
    }

    pub fn tail_variance(&self) -> f64 {
        if self.kind == JitterKind::None {
            return 0.0;
        }
        let q = self.tail_ppm as f64 / 1e6;
        let t = self.tail_magnitude as f64;
        let second = t * (2.0 * t + 1.0) / 6.0;
        let first = t / 2.0;
        q * second - (q * first).powi(2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn draws(model: JitterModel, n: usize) -> Vec<u64> {
        let s = JitterSampler::new(&model);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        (0..n).map(|_| s.draw(&mut rng)).collect()
    }

    #[test]
    fn none_is_always_zero() {
        assert!(draws(JitterModel::none(), 1000).iter().all(|&d| d == 0));
    }

    #[test]
    fn draws_stay_in_bounds() {
        let model = JitterModel {
            kind: JitterKind::TruncatedNormal,
            magnitude: 1000,
            tail_probability: 0.2,
            tail_magnitude: 500,
        };
        let d = draws(model, 20_000);
        assert!(d.iter().all(|&x| x <= model.max_draw()));
        assert!(d.iter().any(|&x| x > 1000), "tail never hit");
    }

    #[test]
    fn moments_match_closed_form() {
        for kind in [JitterKind::TruncatedNormal, JitterKind::Uniform] {
            let model = JitterModel {
                kind,
                magnitude: 4000,
                tail_probability: 0.01,
                tail_magnitude: 8000,
            };
            let s = JitterSampler::new(&model);
            let d = draws(model, 200_000);
            let n = d.len() as f64;
            let mean = d.iter().map(|&x| x as f64).sum::<f64>() / n;
            let var = d.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0);
            assert!(
                (mean - s.mean()).abs() / s.mean() < 0.01,
                "{kind:?} mean {mean} vs {}",
                s.mean()
            );
            assert!(
                (var - s.variance()).abs() / s.variance() < 0.05,
                "{kind:?} var {var} vs {}",
                s.variance()
            );
        }
    }
}

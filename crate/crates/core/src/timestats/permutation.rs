use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::StatsError;

pub const MIN_PERMUTATIONS: usize = 1000;

/// Two-sided permutation test on the difference of means.
///
/// When the number of distinct labelings `C(n_a + n_b, n_a)` does not exceed
/// `iterations`, every labeling is enumerated and the exact p-value is
/// returned. Otherwise `iterations` random relabelings are drawn from a
/// ChaCha8 stream seeded with `seed` and `p = (hits + 1) / (iterations + 1)`.
pub fn permutation_test(a: &[f64], b: &[f64], iterations: usize, seed: u64) -> Result<f64, StatsError> {
    if iterations < MIN_PERMUTATIONS {
        return Err(StatsError::TooFewIterations {
            needed: MIN_PERMUTATIONS,
            got: iterations,
        });
    }
    for x in [a, b] {
        if x.is_empty() {
            return Err(StatsError::TooFewSamples { needed: 1, got: 0 });
        }
    }
    let shift = a[0].min(b[0]);
    let pooled: Vec<f64> = a.iter().chain(b).map(|x| x - shift).collect();
    let na = a.len();
    let nb = b.len();
    let total: f64 = pooled.iter().sum();
    let stat = |sum_a: f64| (sum_a / na as f64 - (total - sum_a) / nb as f64).abs();
    let observed = stat(pooled[..na].iter().sum());
    let scale = pooled.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
    let cutoff = observed - 1e-9 * scale;

    if let Some(count) = binomial(na + nb, na).filter(|&c| c <= iterations as u128 && na + nb < 64) {
        let mut hits = 0u128;
        for_each_subset(na + nb, na, |mask| {
            let sum_a: f64 = (0..na + nb).filter(|i| mask >> i & 1 == 1).map(|i| pooled[i]).sum();
            if stat(sum_a) >= cutoff {
                hits += 1;
            }
        });
        return Ok(hits as f64 / count as f64);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut work = pooled.clone();
    let mut hits = 0usize;
    for _ in 0..iterations {
        // Partial Fisher-Yates: the first `na` slots become group a.
        for i in 0..na {
            let j = rng.random_range(i..work.len());
            work.swap(i, j);
        }
        let sum_a: f64 = work[..na].iter().sum();
        if stat(sum_a) >= cutoff {
            hits += 1;
        }
    }
    Ok((hits + 1) as f64 / (iterations + 1) as f64)
}

fn binomial(n: usize, k: usize) -> Option<u128> {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul((n - i) as u128)? / (i as u128 + 1);
    }
    Some(acc)
}

/// Visits every `k`-subset of `0..n` as a bitmask (Gosper's hack).
fn for_each_subset(n: usize, k: usize, mut f: impl FnMut(u64)) {
    if k == 0 {
        f(0);
        return;
    }
    let limit = 1u64 << n;
    let mut mask = (1u64 << k) - 1;
    while mask < limit {
        f(mask);
        let c = mask & mask.wrapping_neg();
        let r = mask + c;
        mask = (((r ^ mask) >> 2) / c) | r;
    }
}

use serde::{Deserialize, Serialize};

use super::special::student_t_two_sided;
use super::summary::mean_variance;
use super::StatsError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t_statistic: f64,
    /// Welch-Satterthwaite, real-valued.
    pub degrees_of_freedom: f64,
    /// Two-sided.
    pub p_value: f64,
    pub alpha: f64,
    pub reject: bool,
    pub mean_a: f64,
    pub mean_b: f64,
}

pub(crate) fn check_alpha(alpha: f64) -> Result<(), StatsError> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(StatsError::InvalidAlpha(alpha))
    }
}

/// Welch's unequal-variance two-sample t-test of equal means.
pub fn welch_t_test(a: &[f64], b: &[f64], alpha: f64) -> Result<TTestResult, StatsError> {
    check_alpha(alpha)?;
    for x in [a, b] {
        if x.len() < 2 {
            return Err(StatsError::TooFewSamples {
                needed: 2,
                got: x.len(),
            });
        }
    }
    // Center both groups on a common reference; the choice is symmetric in
    // (a, b) so swapping the groups only flips the sign of t.
    let shift = a[0].min(b[0]);
    let ca: Vec<f64> = a.iter().map(|x| x - shift).collect();
    let cb: Vec<f64> = b.iter().map(|x| x - shift).collect();
    let (ma, va) = mean_variance(&ca);
    let (mb, vb) = mean_variance(&cb);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (sa, sb) = (va.max(0.0) / na, vb.max(0.0) / nb);
    let diff = ma - mb;

    let (t, df, p) = if sa + sb == 0.0 {
        let df = na + nb - 2.0;
        if diff == 0.0 {
            (0.0, df, 1.0)
        } else {
            (diff.signum() * f64::INFINITY, df, 0.0)
        }
    } else {
        let t = diff / (sa + sb).sqrt();
        let df = (sa + sb).powi(2) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
        (t, df, student_t_two_sided(t, df))
    };
    Ok(TTestResult {
        t_statistic: t,
        degrees_of_freedom: df,
        p_value: p,
        alpha,
        reject: p < alpha,
        mean_a: ma + shift,
        mean_b: mb + shift,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_constants() {
        let r = welch_t_test(&[5.0; 4], &[5.0; 4], 0.05).unwrap();
        assert_eq!(r.t_statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
        assert!(!r.reject);
    }

    #[test]
    fn distinct_constants() {
        let r = welch_t_test(&[5.0; 4], &[6.0; 3], 0.05).unwrap();
        assert_eq!(r.p_value, 0.0);
        assert!(r.reject);
        assert!(r.t_statistic.is_infinite() && r.t_statistic < 0.0);
    }

    #[test]
    fn one_zero_variance_uses_general_formula() {
        let r = welch_t_test(&[5.0, 5.0, 5.0], &[4.0, 6.0, 5.0, 7.0], 0.05).unwrap();
        // s_b^2 = 5/3, t = -0.5 / sqrt(5/12), df = n_b - 1.
        assert!((r.t_statistic + 0.5 / (5.0f64 / 12.0).sqrt()).abs() < 1e-12);
        assert!((r.degrees_of_freedom - 3.0).abs() < 1e-12);
    }

    #[test]
    fn hand_computed_example() {
        // means 10 and 12, variances 0.5 each: t = -2 / sqrt(0.2), df = 8.
        let a = [10.0, 11.0, 9.0, 10.0, 10.0];
        let b = [12.0, 13.0, 11.0, 12.0, 12.0];
        let r = welch_t_test(&a, &b, 0.05).unwrap();
        assert!((r.t_statistic + 2.0 / 0.2f64.sqrt()).abs() < 1e-12);
        assert!((r.degrees_of_freedom - 8.0).abs() < 1e-12);
        assert!(r.reject);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(welch_t_test(&[1.0], &[1.0, 2.0], 0.05).is_err());
        assert!(welch_t_test(&[1.0, 2.0], &[1.0, 2.0], 0.0).is_err());
        assert!(welch_t_test(&[1.0, 2.0], &[1.0, 2.0], 1.0).is_err());
    }
}

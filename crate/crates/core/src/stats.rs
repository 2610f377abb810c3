//! Summary statistics for multi-seed runs.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::StatsError;

/// Critical value used for confidence intervals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CiMethod {
    /// Normal quantile; 1.96 at the 95% level.
    #[default]
    Normal,
    /// Student t quantile with n - 1 degrees of freedom.
    StudentT,
}

fn critical_value(level: f64, n: usize, method: CiMethod) -> Result<f64, StatsError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(StatsError::Invalid(format!("confidence level must lie in (0, 1), got {level}")));
    }
    let p = 0.5 + level / 2.0;
    let q = match method {
        // Keep the conventional rounded multiplier at the default level.
        CiMethod::Normal if level == 0.95 => 1.96,
        CiMethod::Normal => Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(p),
        CiMethod::StudentT => StudentsT::new(0.0, 1.0, (n - 1) as f64)
            .map_err(|e| StatsError::Invalid(e.to_string()))?
            .inverse_cdf(p),
    };
    Ok(q)
}

pub fn mean(samples: &[f64]) -> f64 {
    samples.iter().sum::<f64>() / samples.len() as f64
}

/// Sample standard deviation with the n - 1 denominator.
pub fn sample_std(samples: &[f64]) -> f64 {
    let m = mean(samples);
    let ss: f64 = samples.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (samples.len() - 1) as f64).sqrt()
}

/// `mean -/+ q * s / sqrt(n)`.
pub fn compute_ci(samples: &[f64], level: f64, method: CiMethod) -> Result<(f64, f64), StatsError> {
    if samples.len() < 2 {
        return Err(StatsError::TooFewSamples {
            needed: 2,
            got: samples.len(),
        });
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(StatsError::Invalid("non-finite sample".into()));
    }
    let q = critical_value(level, samples.len(), method)?;
    let m = mean(samples);
    let half = q * sample_std(samples) / (samples.len() as f64).sqrt();
    Ok((m - half, m + half))
}

/// Trailing mean over the last `window` values; the first entries average
/// whatever prefix exists.
pub fn moving_average(values: &[f64], window: usize) -> Result<Vec<f64>, StatsError> {
    if window == 0 {
        return Err(StatsError::Invalid("window must be >= 1".into()));
    }
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for (i, v) in values.iter().enumerate() {
        sum += v;
        if i >= window {
            sum -= values[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    Ok(out)
}

/// First index from which every value stays within `tolerance * |last|` of
/// the last value.
pub fn plateau_episode(smoothed: &[f64], tolerance: f64) -> Result<usize, StatsError> {
    let Some(&last) = smoothed.last() else {
        return Err(StatsError::TooFewSamples { needed: 1, got: 0 });
    };
    let band = tolerance * last.abs();
    let mut idx = smoothed.len() - 1;
    while idx > 0 && (smoothed[idx - 1] - last).abs() <= band {
        idx -= 1;
    }
    Ok(idx)
}

/// Mean seconds per episode, leaving out the first episode.
pub fn measure_execution_time(wall_times: &[f64]) -> Result<f64, StatsError> {
    if wall_times.len() < 5 {
        return Err(StatsError::TooFewSamples {
            needed: 5,
            got: wall_times.len(),
        });
    }
    Ok(mean(&wall_times[1..]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ci_of_hand_example() {
        let (lo, hi) = compute_ci(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0], 0.95, CiMethod::Normal).unwrap();
        // s = sqrt(32 / 7), half width 1.96 s / sqrt(8)
        let half = 1.96 * (32.0f64 / 7.0).sqrt() / 8f64.sqrt();
        assert!((lo - (5.0 - half)).abs() < 1e-12 && (hi - (5.0 + half)).abs() < 1e-12);
        assert!((lo - 3.52).abs() < 0.01 && (hi - 6.48).abs() < 0.01);
    }

    #[test]
    fn ci_degenerate_cases() {
        assert_eq!(compute_ci(&[5.0; 4], 0.95, CiMethod::Normal).unwrap(), (5.0, 5.0));
        assert_eq!(
            compute_ci(&[1.0], 0.95, CiMethod::Normal),
            Err(StatsError::TooFewSamples { needed: 2, got: 1 })
        );
        assert!(compute_ci(&[1.0, 2.0], 1.5, CiMethod::Normal).is_err());
        let (lo, hi) = compute_ci(&[1.0, 2.0, 3.0], 0.95, CiMethod::Normal).unwrap();
        assert!(((lo + hi) / 2.0 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn t_interval_is_wider() {
        let xs = [1.0, 3.0, 2.0, 5.0];
        let n = compute_ci(&xs, 0.95, CiMethod::Normal).unwrap();
        let t = compute_ci(&xs, 0.95, CiMethod::StudentT).unwrap();
        assert!(t.0 < n.0 && t.1 > n.1);
        // t_{0.975, 3} = 3.182446...
        let half = 3.182446305284263 * sample_std(&xs) / 2.0;
        assert!((t.1 - (mean(&xs) + half)).abs() < 1e-6);
    }

    #[test]
    fn moving_average_examples() {
        assert_eq!(moving_average(&[1.0; 7], 3).unwrap(), vec![1.0; 7]);
        assert_eq!(moving_average(&[0.0, 10.0], 2).unwrap(), vec![0.0, 5.0]);
        let ramp: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(moving_average(&ramp, 10).unwrap()[99], 95.5);
        assert!(moving_average(&ramp, 0).is_err());
    }

    #[test]
    fn plateau_examples() {
        assert_eq!(plateau_episode(&[-3.0; 20], 0.1).unwrap(), 0);
        let mut step = vec![-100.0; 7];
        step.extend(vec![-10.0; 13]);
        assert_eq!(plateau_episode(&step, 0.1).unwrap(), 7);
        assert!(plateau_episode(&[], 0.1).is_err());
    }

    #[test]
    fn execution_time_skips_first() {
        assert_eq!(measure_execution_time(&[9.0, 1.0, 1.0, 1.0, 1.0]).unwrap(), 1.0);
        assert!(measure_execution_time(&[1.0; 4]).is_err());
    }
}

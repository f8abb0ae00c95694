//! Order statistics used by the benchmark reports.

use std::time::Duration;

use crate::error::{Error, Result};

/// Nearest-rank percentile: sort ascending, take index `ceil(p * n) - 1`.
pub fn percentile<T: Copy + PartialOrd>(samples: &[T], p: f64) -> Result<T> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("samples must be totally ordered"));
    percentile_sorted(&sorted, p)
}

/// Same as [`percentile`] for input already sorted ascending.
pub fn percentile_sorted<T: Copy>(sorted: &[T], p: f64) -> Result<T> {
    if sorted.is_empty() {
        return Err(Error::EmptySamples);
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidArgument(format!("percentile fraction {p} not in (0, 1]")));
    }
    let n = sorted.len();
    let rank = (p * n as f64).ceil() as usize;
    Ok(sorted[rank.clamp(1, n) - 1])
}

pub fn millis(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

/// p50/p95/p99 triple.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Percentiles {
    pub p50: f64,
    pub p95: f64,
    pub p99: f64,
}

impl Percentiles {
    pub fn of(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptySamples);
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Percentiles {
            p50: percentile_sorted(&sorted, 0.50)?,
            p95: percentile_sorted(&sorted, 0.95)?,
            p99: percentile_sorted(&sorted, 0.99)?,
        })
    }

    /// Like [`Percentiles::of`], but zeros for an empty set.
    pub fn of_or_zero(samples: &[f64]) -> Self {
        Self::of(samples).unwrap_or_default()
    }
}

/// Mean with a normal-approximation 95% confidence half-width,
/// `1.96 * s / sqrt(n)` with `s` the sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub max: f64,
    pub std_dev: f64,
    pub ci95: f64,
}

impl Summary {
    pub fn of(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptySamples);
        }
        let n = samples.len();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let max = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let std_dev = if n > 1 {
            (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Ok(Summary {
            n,
            mean,
            max,
            std_dev,
            ci95: 1.96 * std_dev / (n as f64).sqrt(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn nearest_rank_examples() {
        assert_eq!(percentile(&[5], 0.99).unwrap(), 5);
        let v: Vec<u32> = (1..=10).collect();
        assert_eq!(percentile(&v, 0.5).unwrap(), 5);
        assert_eq!(percentile(&v, 0.99).unwrap(), 10);
        assert_eq!(percentile(&v, 1.0).unwrap(), 10);
        assert_eq!(percentile(&v, 0.01).unwrap(), 1);
    }

    #[test]
    fn durations_work() {
        let v = [Duration::from_millis(3), Duration::from_millis(1), Duration::from_millis(2)];
        assert_eq!(percentile(&v, 0.5).unwrap(), Duration::from_millis(2));
    }

    #[test]
    fn empty_and_bad_fraction_are_errors() {
        assert!(matches!(percentile::<u32>(&[], 0.5), Err(Error::EmptySamples)));
        assert!(percentile(&[1], 0.0).is_err());
        assert!(percentile(&[1], 1.5).is_err());
    }

    #[test]
    fn ci95_matches_hand_computation() {
        // mean 5.5; sum of squared deviations 82.5; s = sqrt(82.5 / 9) = 3.0276503540974917
        // half-width = 1.96 * s / sqrt(10) = 1.8765571...
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        let s = Summary::of(&v).unwrap();
        assert_eq!(s.mean, 5.5);
        assert_eq!(s.max, 10.0);
        assert!((s.std_dev - 3.027_650_354_097_491_7).abs() < 1e-12);
        assert!((s.ci95 - 1.876_557_1).abs() < 1e-6, "{}", s.ci95);
    }

    proptest! {
        #[test]
        fn monotone_in_p(mut v in prop::collection::vec(0u32..1000, 1..200), a in 0.001f64..1.0, b in 0.001f64..1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            v.sort();
            prop_assert!(percentile_sorted(&v, lo).unwrap() <= percentile_sorted(&v, hi).unwrap());
        }

        #[test]
        fn triple_is_ordered(v in prop::collection::vec(0f64..1e3, 1..100)) {
            let p = Percentiles::of(&v).unwrap();
            prop_assert!(p.p50 <= p.p95 && p.p95 <= p.p99);
        }
    }
}

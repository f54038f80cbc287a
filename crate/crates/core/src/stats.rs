//! Episode summary statistics.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StatsError {
    #[error("need at least 1 episode")]
    NoEpisodes,
    #[error("{successes} successes out of {episodes} episodes")]
    TooManySuccesses { successes: usize, episodes: usize },
}

/// Success fraction with a 95% normal-approximation interval
/// `p +/- 1.96 sqrt(p (1 - p) / E)`, clamped to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuccessRate {
    pub episodes: usize,
    pub successes: usize,
    pub rate: f64,
    pub half_width: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

pub const Z95: f64 = 1.96;

pub fn success_rate(successes: usize, episodes: usize) -> Result<SuccessRate, StatsError> {
    if episodes == 0 {
        return Err(StatsError::NoEpisodes);
    }
    if successes > episodes {
        return Err(StatsError::TooManySuccesses {
            successes,
            episodes,
        });
    }
    let p = successes as f64 / episodes as f64;
    let half_width = Z95 * (p * (1.0 - p) / episodes as f64).sqrt();
    Ok(SuccessRate {
        episodes,
        successes,
        rate: p,
        half_width,
        ci_low: (p - half_width).max(0.0),
        ci_high: (p + half_width).min(1.0),
    })
}

/// Linear-interpolation percentile (`q` in `[0, 100]`) of sorted data.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = (q.clamp(0.0, 100.0) / 100.0) * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub p50: f64,
    pub p90: f64,
    pub p99: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(data: &[f64]) -> Self {
        let mut s = data.to_vec();
        s.sort_by(f64::total_cmp);
        Self {
            count: s.len(),
            mean: if s.is_empty() {
                f64::NAN
            } else {
                s.iter().sum::<f64>() / s.len() as f64
            },
            p50: percentile(&s, 50.0),
            p90: percentile(&s, 90.0),
            p99: percentile(&s, 99.0),
            max: s.last().copied().unwrap_or(f64::NAN),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_episodes_is_an_error() {
        assert_eq!(
            success_rate(0, 0).unwrap_err().to_string(),
            "need at least 1 episode"
        );
    }

    #[test]
    fn all_success_is_degenerate() {
        let s = success_rate(40, 40).unwrap();
        assert_eq!(
            (s.rate, s.ci_low, s.ci_high, s.half_width),
            (1.0, 1.0, 1.0, 0.0)
        );
    }

    #[test]
    fn interval_is_clamped() {
        let s = success_rate(1, 3).unwrap();
        assert_eq!(s.ci_low, 0.0);
        assert!(s.ci_high < 1.0);
    }

    #[test]
    fn percentiles_interpolate() {
        let d = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile(&d, 0.0), 1.0);
        assert_eq!(percentile(&d, 100.0), 4.0);
        assert_eq!(percentile(&d, 50.0), 2.5);
        let s = Summary::of(&[3.0, 1.0, 2.0]);
        assert_eq!((s.mean, s.p50, s.max), (2.0, 2.0, 3.0));
    }
}

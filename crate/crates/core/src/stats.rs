//! Sample statistics shared by the Monte-Carlo validators and experiments.

use serde::{Deserialize, Serialize};

/// Sample moment with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

impl ScalarEstimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let m = xs.len();
        let mean = xs.iter().sum::<f64>() / m as f64;
        let var = if m > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1) as f64 } else { 0.0 };
        Self { mean, std_error: (var / m as f64).sqrt(), samples: m }
    }

    pub fn z_score(&self, target: f64) -> f64 {
        let diff = (self.mean - target).abs();
        if self.std_error > 0.0 {
            diff / self.std_error
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// Total-variation distance `(1/2) sum |p - q|`. The shorter slice is
/// padded with zeros; mass missing from either side (tails cut off by a
/// truncation) is added as `|1 - sum|`.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    let n = p.len().max(q.len());
    let at = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
    let body: f64 = (0..n).map(|i| (at(p, i) - at(q, i)).abs()).sum();
    let tail_p = (1.0 - p.iter().sum::<f64>()).max(0.0);
    let tail_q = (1.0 - q.iter().sum::<f64>()).max(0.0);
    0.5 * (body + tail_p + tail_q)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn estimate_of_constant() {
        let e = ScalarEstimate::from_samples(&[2.0; 5]);
        assert_eq!(e.mean, 2.0);
        assert_eq!(e.std_error, 0.0);
        assert_eq!(e.z_score(2.0), 0.0);
        assert!(e.z_score(1.0).is_infinite());
    }

    #[test]
    fn estimate_matches_hand_computation() {
        let e = ScalarEstimate::from_samples(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(e.mean, 2.5);
        // sample variance 5/3
        assert!((e.std_error - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn total_variation_cases() {
        assert_eq!(total_variation(&[0.5, 0.5], &[0.5, 0.5]), 0.0);
        assert!((total_variation(&[1.0], &[0.0, 1.0]) - 1.0).abs() < 1e-15);
        // q has an unlisted tail of 1/9
        let q = [2.0 / 3.0, 2.0 / 9.0];
        assert!((total_variation(&[0.5, 0.5], &q) - 5.0 / 18.0).abs() < 1e-15);
    }
}

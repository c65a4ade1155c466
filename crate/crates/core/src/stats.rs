//! Small statistical helpers shared by the estimators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use statrs::statistics::{Data, OrderStatistics, Statistics};

/// Sample mean and its standard error.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let m = xs.iter().mean();
    if xs.len() < 2 {
        return (m, f64::NAN);
    }
    let v = xs.iter().variance();
    (m, (v / xs.len() as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn half_width(&self) -> f64 {
        0.5 * (self.hi - self.lo)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

/// Percentile bootstrap over `n` resampling units.
///
/// `stat` receives the multiset of drawn unit indices.
pub fn bootstrap_ci(
    n: usize,
    resamples: usize,
    seed: u64,
    level: f64,
    mut stat: impl FnMut(&[usize]) -> f64,
) -> Interval {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut draws = vec![0usize; n];
    let values: Vec<f64> = (0..resamples)
        .map(|_| {
            for slot in draws.iter_mut() {
                *slot = rng.random_range(0..n);
            }
            stat(&draws)
        })
        .collect();
    let mut data = Data::new(values);
    let tail = 0.5 * (1.0 - level);
    Interval { lo: data.quantile(tail), hi: data.quantile(1.0 - tail) }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
}

/// Ordinary least squares `y ≈ slope·x + intercept`.
pub fn line_fit(x: &[f64], y: &[f64]) -> LineFit {
    let mx = x.iter().mean();
    let my = y.iter().mean();
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
    }
    let slope = sxy / sxx;
    LineFit { slope, intercept: my - slope * mx }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn line_fit_recovers_exact_line() {
        let x = [0.0, 1.0, 2.0, 5.0];
        let y: Vec<f64> = x.iter().map(|v| 3.0 - 0.5 * v).collect();
        let f = line_fit(&x, &y);
        assert_relative_eq!(f.slope, -0.5, max_relative = 1e-14);
        assert_relative_eq!(f.intercept, 3.0, max_relative = 1e-14);
    }

    #[test]
    fn bootstrap_brackets_the_mean() {
        let xs: Vec<f64> = (0..200).map(|i| (i as f64 * 0.37).sin()).collect();
        let (m, se) = mean_and_se(&xs);
        let ci = bootstrap_ci(xs.len(), 500, 1, 0.95, |ix| {
            ix.iter().map(|&i| xs[i]).sum::<f64>() / ix.len() as f64
        });
        assert!(ci.contains(m));
        assert!((ci.half_width() - 1.96 * se).abs() < 0.5 * se);
        let again = bootstrap_ci(xs.len(), 500, 1, 0.95, |ix| {
            ix.iter().map(|&i| xs[i]).sum::<f64>() / ix.len() as f64
        });
        assert_eq!(ci, again);
    }
}

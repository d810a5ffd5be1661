use rand::{Rng, SeedableRng};
use serde::Serialize;

use crate::mdp::SimRng;

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator); 0 for fewer than two
/// values.
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairedDelta {
    /// Mean of `treatment - baseline` over the pairs.
    pub mean_delta: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub pairs: usize,
}

impl PairedDelta {
    pub fn excludes_zero(&self) -> bool {
        self.ci_low > 0.0 || self.ci_high < 0.0
    }
}

/// Percentile bootstrap of the mean paired difference: pairs are resampled
/// with replacement `samples` times with a fixed-seed stream. The CI is the
/// `[2.5%, 97.5%]` range of the resampled means.
pub fn paired_bootstrap(baseline: &[f64], treatment: &[f64], samples: usize, seed: u64) -> PairedDelta {
    assert_eq!(baseline.len(), treatment.len(), "paired samples must align");
    let diffs: Vec<f64> = baseline.iter().zip(treatment).map(|(b, t)| t - b).collect();
    let n = diffs.len();
    let mean_delta = mean(&diffs);
    if n == 0 || samples == 0 {
        return PairedDelta {
            mean_delta,
            ci_low: f64::NAN,
            ci_high: f64::NAN,
            pairs: n,
        };
    }
    let mut rng = SimRng::seed_from_u64(seed);
    let mut means: Vec<f64> = (0..samples)
        .map(|_| (0..n).map(|_| diffs[rng.gen_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let at = |q: f64| means[((q * samples as f64).floor() as usize).min(samples - 1)];
    PairedDelta {
        mean_delta,
        ci_low: at(0.025),
        ci_high: at(0.975),
        pairs: n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_std() {
        let xs = [2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0];
        assert_eq!(mean(&xs), 5.0);
        // population std is 2; sample std is sqrt(32/7)
        assert!((sample_std(&xs) - (32.0f64 / 7.0).sqrt()).abs() < 1e-12);
        assert_eq!(sample_std(&[1.0]), 0.0);
    }

    #[test]
    fn bootstrap_of_constant_shift() {
        let b: Vec<f64> = (0..50).map(|i| f64::from(i % 2)).collect();
        let t: Vec<f64> = b.iter().map(|x| x + 0.25).collect();
        let d = paired_bootstrap(&b, &t, 1000, 1);
        assert!((d.mean_delta - 0.25).abs() < 1e-12);
        assert!((d.ci_low - 0.25).abs() < 1e-12 && (d.ci_high - 0.25).abs() < 1e-12);
        assert!(d.excludes_zero());
    }

    #[test]
    fn bootstrap_of_noise_straddles_zero() {
        let b = vec![0.0; 40];
        let t: Vec<f64> = (0..40).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let d = paired_bootstrap(&b, &t, 2000, 3);
        assert!(d.ci_low < 0.0 && d.ci_high > 0.0);
        assert!(!d.excludes_zero());
    }
}

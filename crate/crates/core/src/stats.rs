//! Small descriptive-statistics toolkit shared by the estimators and the
//! exponent fits.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance; zero for fewer than two samples.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Unbiased sample covariance of paired samples.
pub fn covariance(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    if xs.len() < 2 {
        return 0.0;
    }
    let (mx, my) = (mean(xs), mean(ys));
    xs.iter()
        .zip(ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>()
        / (xs.len() - 1) as f64
}

/// Pearson correlation; `None` when either sample is constant.
pub fn correlation(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let (vx, vy) = (variance(xs), variance(ys));
    if vx <= 0.0 || vy <= 0.0 {
        return None;
    }
    Some((covariance(xs, ys) / (vx * vy).sqrt()).clamp(-1.0, 1.0))
}

/// Standard error of the unbiased sample variance, from the fourth central
/// moment: `sqrt((m4 - s^4) / n)`.
pub fn variance_std_error(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n as f64;
    let s2 = variance(xs);
    ((m4 - s2 * s2).max(0.0) / n as f64).sqrt()
}

/// Linear-interpolation quantile of already sorted data (Hyndman-Fan type 7).
pub fn quantile_sorted(sorted: &[f64], level: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * level.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(xs: &[f64]) -> f64 {
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    quantile_sorted(&s, 0.5)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapInterval {
    pub low: f64,
    pub high: f64,
    /// Standard deviation of the bootstrap replicates.
    pub spread: f64,
    /// Resamples for which the statistic was undefined.
    pub skipped: usize,
}

/// Percentile bootstrap over `n` units with a seeded generator.
///
/// `statistic` receives the resampled unit indices and may decline a
/// degenerate resample by returning `None`.
pub fn bootstrap_percentile(
    n: usize,
    resamples: usize,
    level: f64,
    seed: u64,
    mut statistic: impl FnMut(&[usize]) -> Option<f64>,
) -> Option<BootstrapInterval> {
    if n == 0 {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = vec![0usize; n];
    let mut reps = Vec::with_capacity(resamples);
    let mut skipped = 0;
    for _ in 0..resamples {
        for slot in idx.iter_mut() {
            *slot = rng.gen_range(0..n);
        }
        match statistic(&idx).filter(|v| v.is_finite()) {
            Some(v) => reps.push(v),
            None => skipped += 1,
        }
    }
    if reps.is_empty() {
        return None;
    }
    reps.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    let spread = variance(&reps).sqrt();
    Some(BootstrapInterval {
        low: quantile_sorted(&reps, alpha),
        high: quantile_sorted(&reps, 1.0 - alpha),
        spread,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mean(&xs), 2.5);
        assert!((variance(&xs) - 5.0 / 3.0).abs() < 1e-15);
        assert_eq!(variance(&[3.0]), 0.0);
        assert!((covariance(&xs, &xs) - variance(&xs)).abs() < 1e-15);
        assert_eq!(correlation(&xs, &[2.0, 4.0, 6.0, 8.0]), Some(1.0));
        assert_eq!(correlation(&xs, &[1.0; 4]), None);
    }

    #[test]
    fn quantiles_interpolate() {
        let s = [0.0, 10.0, 20.0, 30.0, 40.0];
        assert_eq!(quantile_sorted(&s, 0.5), 20.0);
        assert_eq!(quantile_sorted(&s, 0.25), 10.0);
        assert_eq!(quantile_sorted(&s, 0.05), 2.0);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
    }

    #[test]
    fn bootstrap_is_seeded() {
        let data: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        let stat =
            |idx: &[usize]| Some(idx.iter().map(|&i| data[i]).sum::<f64>() / idx.len() as f64);
        let a = bootstrap_percentile(data.len(), 500, 0.9, 7, stat).unwrap();
        let b = bootstrap_percentile(data.len(), 500, 0.9, 7, stat).unwrap();
        assert_eq!(a, b);
        assert!(a.low <= mean(&data) && mean(&data) <= a.high);
    }
}

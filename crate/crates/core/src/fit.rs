//! Power-law fits and the derived scales `Delta(n) = (n sigma(n))^{1/2}` and
//! `f(n) = Delta(n) (log n)^{1/2} / n`.
//!
//! Fits are ordinary least squares of `log y` on `log x` with a percentile
//! bootstrap over the points for the confidence interval. Slowly varying
//! corrections to the power laws are not modelled, so at desk scale the
//! fitted slope mixes the exponent with logarithmic corrections.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::stats;

pub const FIT_CI_LEVEL: f64 = 0.9;
pub const FIT_BOOTSTRAP_RESAMPLES: usize = 1000;
/// Largest factor by which a scale table may be extrapolated beyond its
/// fitted range.
pub const EXTRAPOLATION_GUARD: f64 = 4.0;
const INVERSE_REL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("need at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("all x values coincide")]
    DegenerateDesign,
    #[error("points must be positive and finite")]
    NonPositive,
    #[error("only {positive} positive entries remain after dropping {dropped}")]
    TooFewPositive { positive: usize, dropped: usize },
    #[error("x values span a factor of {span:.3}, below the required {required}")]
    InsufficientSpan { span: f64, required: f64 },
    #[error("{0} is outside the table's guarded range")]
    OutOfRange(f64),
    #[error("invalid scale table: {0}")]
    InvalidTable(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub exponent: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_points: usize,
    /// SHA-256 of the input table.
    pub input_checksum: String,
}

fn ols(xs: &[f64], ys: &[f64]) -> Option<(f64, f64, f64)> {
    let (mx, my) = (stats::mean(xs), stats::mean(ys));
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r2 = if ss_tot > 0.0 {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Some((slope, intercept, r2))
}

pub fn checksum(points: &[(f64, f64)]) -> String {
    let mut h = Sha256::new();
    for (x, y) in points {
        h.update(x.to_le_bytes());
        h.update(y.to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// OLS of `log y` on `log x`; the intercept is on the natural-log scale.
pub fn fit_power_law(points: &[(f64, f64)]) -> Result<ExponentFit, FitError> {
    if points.len() < 3 {
        return Err(FitError::TooFewPoints(points.len()));
    }
    if points
        .iter()
        .any(|(x, y)| !(x.is_finite() && y.is_finite() && *x > 0.0 && *y > 0.0))
    {
        return Err(FitError::NonPositive);
    }
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let (exponent, intercept, r_squared) = ols(&lx, &ly).ok_or(FitError::DegenerateDesign)?;
    let input_checksum = checksum(points);
    let seed = u64::from_str_radix(&input_checksum[..16], 16).expect("hex digest");
    let ci = stats::bootstrap_percentile(
        points.len(),
        FIT_BOOTSTRAP_RESAMPLES,
        FIT_CI_LEVEL,
        seed,
        |idx| {
            let bx: Vec<f64> = idx.iter().map(|&i| lx[i]).collect();
            let by: Vec<f64> = idx.iter().map(|&i| ly[i]).collect();
            ols(&bx, &by).map(|(s, _, _)| s)
        },
    );
    let (lo, hi) = ci.map_or((exponent, exponent), |c| (c.low, c.high));
    Ok(ExponentFit {
        exponent,
        intercept,
        r_squared,
        ci_low: lo.min(exponent),
        ci_high: hi.max(exponent),
        n_points: points.len(),
        input_checksum,
    })
}

/// `sigma(r)` tabulated at increasing `r`, interpolated linearly in log-log
/// coordinates and extrapolated along the end segments up to
/// [`EXTRAPOLATION_GUARD`] beyond the table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleTable {
    points: Vec<(f64, f64)>,
}

impl ScaleTable {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self, FitError> {
        if points.len() < 2 {
            return Err(FitError::InvalidTable("need at least two rows"));
        }
        if points
            .iter()
            .any(|(r, s)| !(r.is_finite() && s.is_finite() && *r > 0.0 && *s > 0.0))
        {
            return Err(FitError::InvalidTable("r and sigma must be positive"));
        }
        if points.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(FitError::InvalidTable("r must be strictly increasing"));
        }
        Ok(Self { points })
    }

    /// Tabulates a closed-form `sigma` on a log-spaced grid.
    pub fn from_fn(
        lo: f64,
        hi: f64,
        rows: usize,
        sigma: impl Fn(f64) -> f64,
    ) -> Result<Self, FitError> {
        let step = (hi / lo).ln() / (rows - 1) as f64;
        Self::new(
            (0..rows)
                .map(|i| {
                    (
                        lo * (step * i as f64).exp(),
                        sigma(lo * (step * i as f64).exp()),
                    )
                })
                .collect(),
        )
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    /// Guarded domain `[r_min / 4, 4 r_max]`.
    pub fn domain(&self) -> (f64, f64) {
        (
            self.points[0].0 / EXTRAPOLATION_GUARD,
            self.points[self.points.len() - 1].0 * EXTRAPOLATION_GUARD,
        )
    }

    pub fn sigma(&self, r: f64) -> Result<f64, FitError> {
        let (lo, hi) = self.domain();
        if !(r >= lo * (1.0 - 1e-12) && r <= hi * (1.0 + 1e-12)) {
            return Err(FitError::OutOfRange(r));
        }
        let lr = r.ln();
        let pts = &self.points;
        let seg = match pts.iter().position(|p| p.0 >= r) {
            Some(0) => 0,
            Some(j) => j - 1,
            None => pts.len() - 2,
        };
        let (r0, s0) = pts[seg];
        let (r1, s1) = pts[seg + 1];
        if r == r0 {
            return Ok(s0);
        }
        let t = (lr - r0.ln()) / (r1.ln() - r0.ln());
        Ok((s0.ln() + t * (s1.ln() - s0.ln())).exp())
    }

    /// `Delta(n) = (n sigma(n))^{1/2}`.
    pub fn delta_of(&self, n: f64) -> Result<f64, FitError> {
        Ok((n * self.sigma(n)?).sqrt())
    }

    /// Inverse of [`Self::delta_of`] by bisection on `log n`.
    pub fn delta_inverse(&self, length: f64) -> Result<f64, FitError> {
        let (lo, hi) = self.domain();
        let (dlo, dhi) = (self.delta_of(lo)?, self.delta_of(hi)?);
        if !(length >= dlo && length <= dhi) {
            return Err(FitError::OutOfRange(length));
        }
        let (mut a, mut b) = (lo.ln(), hi.ln());
        while b - a > INVERSE_REL_TOL * 1e-3 {
            let mid = 0.5 * (a + b);
            if self.delta_of(mid.exp())? < length {
                a = mid;
            } else {
                b = mid;
            }
        }
        Ok((0.5 * (a + b)).exp())
    }

    /// `f(n) = Delta(n) (log n)^{1/2} / n`, for `n >= 3`.
    pub fn f_of(&self, n: f64) -> Result<f64, FitError> {
        if !(n >= 3.0) {
            return Err(FitError::OutOfRange(n));
        }
        Ok(self.delta_of(n)? * n.ln().sqrt() / n)
    }

    /// `f^{-1}(y) = sup {x : f(x) >= y}` over the guarded domain.
    ///
    /// Scans a log grid downward from the top of the domain for the first
    /// point with `f >= y`, then bisects the crossing.
    pub fn f_inverse(&self, y: f64) -> Result<f64, FitError> {
        let (lo, hi) = self.domain();
        let lo = lo.max(3.0);
        if lo >= hi {
            return Err(FitError::OutOfRange(y));
        }
        if self.f_of(hi)? >= y {
            return Err(FitError::OutOfRange(y));
        }
        let steps = 2000;
        let (llo, lhi) = (lo.ln(), hi.ln());
        let grid = |i: usize| lhi - (lhi - llo) * i as f64 / steps as f64;
        let mut above = None;
        for i in 1..=steps {
            if self.f_of(grid(i).exp())? >= y {
                above = Some(i);
                break;
            }
        }
        let i = above.ok_or(FitError::OutOfRange(y))?;
        // f(exp(a)) >= y > f(exp(b))
        let (mut a, mut b) = (grid(i), grid(i - 1));
        while b - a > INVERSE_REL_TOL * 1e-3 {
            let mid = 0.5 * (a + b);
            if self.f_of(mid.exp())? >= y {
                a = mid;
            } else {
                b = mid;
            }
        }
        Ok((0.5 * (a + b)).exp())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiXiReport {
    pub chi: f64,
    pub chi_ci: Interval,
    pub xi_direct: f64,
    pub xi_direct_ci: Interval,
    /// `(1 + chi) / 2`.
    pub xi_kpz: f64,
    pub xi_kpz_ci: Interval,
    /// `chi - (2 xi_direct - 1)`.
    pub kpz_residual: f64,
    pub kpz_residual_ci: Interval,
}

/// Combines a fluctuation-scale fit and a wandering fit, propagating the
/// intervals by interval arithmetic.
pub fn chi_xi_report(sigma_fit: &ExponentFit, wander_fit: &ExponentFit) -> ChiXiReport {
    chi_xi_from(
        sigma_fit.exponent,
        Interval {
            low: sigma_fit.ci_low,
            high: sigma_fit.ci_high,
        },
        wander_fit.exponent,
        Interval {
            low: wander_fit.ci_low,
            high: wander_fit.ci_high,
        },
    )
}

pub fn chi_xi_from(chi: f64, chi_ci: Interval, xi: f64, xi_ci: Interval) -> ChiXiReport {
    ChiXiReport {
        chi,
        chi_ci,
        xi_direct: xi,
        xi_direct_ci: xi_ci,
        xi_kpz: (1.0 + chi) / 2.0,
        xi_kpz_ci: Interval {
            low: (1.0 + chi_ci.low) / 2.0,
            high: (1.0 + chi_ci.high) / 2.0,
        },
        kpz_residual: chi - (2.0 * xi - 1.0),
        kpz_residual_ci: Interval {
            low: chi_ci.low - (2.0 * xi_ci.high - 1.0),
            high: chi_ci.high - (2.0 * xi_ci.low - 1.0),
        },
    }
}

/// Power law of mean `D(n, L)` against `L`; the ladder must span a factor
/// of at least 8.
pub fn transverse_exponent(table: &[(f64, f64)]) -> Result<ExponentFit, FitError> {
    if table.len() < 3 {
        return Err(FitError::TooFewPoints(table.len()));
    }
    let (lo, hi) = table.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), p| {
        (lo.min(p.0), hi.max(p.0))
    });
    let span = hi / lo;
    if !(span >= 8.0) {
        return Err(FitError::InsufficientSpan {
            span,
            required: 8.0,
        });
    }
    fit_power_law(table)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationFit {
    pub fit: ExponentFit,
    pub dropped: usize,
}

/// Power law of correlation against `J`, after dropping non-positive
/// correlations.
pub fn correlation_exponent(table: &[(f64, f64)]) -> Result<CorrelationFit, FitError> {
    let kept: Vec<(f64, f64)> = table.iter().copied().filter(|p| p.1 > 0.0).collect();
    let dropped = table.len() - kept.len();
    if kept.len() < 3 {
        return Err(FitError::TooFewPositive {
            positive: kept.len(),
            dropped,
        });
    }
    Ok(CorrelationFit {
        fit: fit_power_law(&kept)?,
        dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn exact_power_laws() {
        let f = fit_power_law(&[(10.0, 100.0), (100.0, 1e4), (1000.0, 1e6)]).unwrap();
        assert!((f.exponent - 2.0).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        assert!(f.ci_low <= f.exponent && f.exponent <= f.ci_high);
        for c in [0.1, 1.0, 37.0] {
            let f = fit_power_law(&[
                (2.0, c * 2f64.sqrt()),
                (4.0, c * 2.0),
                (8.0, c * 8f64.sqrt()),
            ])
            .unwrap();
            assert!((f.exponent - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_inputs() {
        assert_eq!(
            fit_power_law(&[(1.0, 1.0), (2.0, 2.0)]).unwrap_err(),
            FitError::TooFewPoints(2)
        );
        assert_eq!(
            fit_power_law(&[(3.0, 1.0), (3.0, 2.0), (3.0, 5.0)]).unwrap_err(),
            FitError::DegenerateDesign
        );
        assert_eq!(
            fit_power_law(&[(1.0, 1.0), (2.0, -2.0), (3.0, 5.0)]).unwrap_err(),
            FitError::NonPositive
        );
    }

    #[test]
    fn noisy_recovery() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let pts: Vec<(f64, f64)> = (1..=12)
            .map(|i| {
                let x = 2f64.powi(i);
                (x, 3.0 * x.powf(0.7) * (1.0 + rng.gen_range(-0.01..0.01)))
            })
            .collect();
        let f = fit_power_law(&pts).unwrap();
        // closed-form OLS on the same logs
        let lx: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
        let ly: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
        let n = lx.len() as f64;
        let (sx, sy) = (lx.iter().sum::<f64>(), ly.iter().sum::<f64>());
        let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| a * b).sum();
        let sxx: f64 = lx.iter().map(|a| a * a).sum();
        let closed = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        assert!((f.exponent - closed).abs() < 1e-10);
        assert!((f.exponent - 0.7).abs() < 0.05);
    }

    #[test]
    fn constant_sigma() {
        let c = 2.5;
        let t = ScaleTable::new(vec![(1.0, c), (1e4, c)]).unwrap();
        for n in [1.0, 10.0, 500.0, 9000.0] {
            assert!((t.delta_of(n).unwrap() - (c * n).sqrt()).abs() < 1e-9 * (c * n).sqrt());
        }
        for l in [2.0, 10.0, 100.0] {
            let expect = l * l / c;
            assert!((t.delta_inverse(l).unwrap() - expect).abs() < 1e-6 * expect);
        }
    }

    #[test]
    fn cube_root_sigma() {
        let t = ScaleTable::from_fn(10.0, 1e5, 9, |r| r.powf(1.0 / 3.0)).unwrap();
        let n = 1234.5f64;
        assert!((t.delta_of(n).unwrap() - n.powf(2.0 / 3.0)).abs() < 1e-9 * n.powf(2.0 / 3.0));
        let l = 50.0f64;
        assert!((t.delta_inverse(l).unwrap() - l.powf(1.5)).abs() < 1e-6 * l.powf(1.5));
        let e6 = 6f64.exp();
        let want = (-2f64).exp() * 6f64.sqrt();
        assert!((t.f_of(e6).unwrap() - want).abs() < 1e-9);
    }

    #[test]
    fn delta_round_trip() {
        let t = ScaleTable::from_fn(4.0, 4096.0, 11, |r| 0.7 * r.powf(0.3)).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let n = (rng.gen_range(4f64.ln()..4096f64.ln())).exp();
            let back = t.delta_inverse(t.delta_of(n).unwrap()).unwrap();
            assert!((back - n).abs() <= 1e-6 * n);
        }
    }

    #[test]
    fn f_decreases_and_inverts() {
        let t = ScaleTable::from_fn(10.0, 1e4, 7, |r| r.powf(1.0 / 3.0)).unwrap();
        let grid: Vec<f64> = (0..100)
            .map(|i| 10.0 * (1e3f64.ln() * i as f64 / 99.0).exp())
            .collect();
        let fs: Vec<f64> = grid.iter().map(|n| t.f_of(*n).unwrap()).collect();
        assert!(fs.iter().all(|f| *f > 0.0));
        assert!(fs.windows(2).all(|w| w[1] < w[0]));
        for n in [10.0, 77.0, 900.0, 9999.0] {
            let back = t.f_inverse(t.f_of(n).unwrap()).unwrap();
            assert!((back - n).abs() <= 1e-6 * n, "{n} -> {back}");
        }
    }

    #[test]
    fn guard_is_enforced() {
        let t = ScaleTable::new(vec![(10.0, 1.0), (100.0, 2.0)]).unwrap();
        assert!(t.sigma(400.0).is_ok());
        assert_eq!(t.sigma(401.0), Err(FitError::OutOfRange(401.0)));
        assert!(t.sigma(2.4).is_err());
        assert!(ScaleTable::new(vec![(10.0, 1.0), (10.0, 2.0)]).is_err());
    }

    #[test]
    fn chi_xi_arithmetic() {
        let iv = |v| Interval { low: v, high: v };
        let r = chi_xi_from(1.0 / 3.0, iv(1.0 / 3.0), 2.0 / 3.0, iv(2.0 / 3.0));
        assert!(r.kpz_residual.abs() < 1e-15);
        assert!((r.xi_kpz - 2.0 / 3.0).abs() < 1e-15);
        assert!(chi_xi_from(0.5, iv(0.5), 0.75, iv(0.75)).kpz_residual.abs() < 1e-15);
        assert!((chi_xi_from(0.2, iv(0.2), 0.7, iv(0.7)).kpz_residual + 0.2).abs() < 1e-12);
    }

    #[test]
    fn transverse_and_correlation_fits() {
        let d: Vec<(f64, f64)> = [8.0, 16.0, 32.0, 64.0]
            .iter()
            .map(|l: &f64| (*l, l.sqrt()))
            .collect();
        assert!((transverse_exponent(&d).unwrap().exponent - 0.5).abs() < 1e-12);
        assert!(matches!(
            transverse_exponent(&d[..3]),
            Err(FitError::InsufficientSpan { .. })
        ));
        // variance of increments under sigma = r^{1/3}: sigma^2(Delta^{-1}(L)) = L^{2 chi / xi} = L
        let t = ScaleTable::from_fn(1.0, 1e6, 13, |r| r.powf(1.0 / 3.0)).unwrap();
        let v: Vec<(f64, f64)> = [8.0, 16.0, 32.0, 64.0]
            .iter()
            .map(|l| (*l, t.sigma(t.delta_inverse(*l).unwrap()).unwrap().powi(2)))
            .collect();
        assert!((fit_power_law(&v).unwrap().exponent - 1.0).abs() < 1e-6);

        let c: Vec<(f64, f64)> = [1.0, 2.0, 4.0, 8.0]
            .iter()
            .map(|j: &f64| (*j, j.powi(-2)))
            .collect();
        let cf = correlation_exponent(&c).unwrap();
        assert!((cf.fit.exponent + 2.0).abs() < 1e-12);
        assert_eq!(cf.dropped, 0);
        let mut c2 = c.clone();
        c2.push((16.0, -0.01));
        assert_eq!(correlation_exponent(&c2).unwrap().dropped, 1);
        assert!(matches!(
            correlation_exponent(&[(1.0, 0.5), (2.0, 0.0), (4.0, -0.1)]),
            Err(FitError::TooFewPositive {
                positive: 1,
                dropped: 2
            })
        ));
    }

    proptest! {
        #[test]
        fn scale_equivariance(c in 1e-3f64..1e3, slope in -2.0f64..2.0) {
            let pts: Vec<(f64, f64)> = [1.5, 3.0, 7.0, 20.0, 55.0].iter().map(|x: &f64| (*x, 2.0 * x.powf(slope) * (1.0 + 0.1 * x.sin()))).collect();
            let scaled: Vec<(f64, f64)> = pts.iter().map(|(x, y)| (*x, c * y)).collect();
            let a = fit_power_law(&pts).unwrap();
            let b = fit_power_law(&scaled).unwrap();
            prop_assert!((a.exponent - b.exponent).abs() <= 1e-12);
            prop_assert!((b.intercept - a.intercept - c.ln()).abs() <= 1e-9);
        }

        #[test]
        fn xi_kpz_in_range(chi in 0.0f64..=1.0) {
            let r = chi_xi_from(chi, Interval { low: chi, high: chi }, 0.6, Interval { low: 0.6, high: 0.6 });
            prop_assert!((0.5..=1.0).contains(&r.xi_kpz));
        }
    }
}

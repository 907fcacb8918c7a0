//! Covariance and correlation of `T(0, a)` and `T(0, b)` for targets
//! `n u_theta -+ J Delta(n) (log n)^{1/2} u_theta_t`.

use serde::{Deserialize, Serialize};

use super::{
    EstimatorError, Lab, ReplicateKernel, ReplicatePlan, ReplicateRunner, BOOTSTRAP_RESAMPLES,
};
use crate::engine::{source_tree_covering, EngineError, WindowPolicy};
use crate::geometry::{lattice_point_at, DirectionFrame, LatticePoint};
use crate::stats;
use crate::weights::WeightDistribution;

pub const CORRELATION_CI_LEVEL: f64 = 0.95;

/// Largest tangential offset of a target relative to its distance `n`
/// along `theta`; keeps both targets within `sqrt(5) n` of the origin.
pub const MAX_OFFSET_RATIO: f64 = 2.0;

#[derive(Debug, Clone)]
pub struct CorrelationKernel {
    pub distribution: WeightDistribution,
    pub plan: ReplicatePlan,
    pub policy: WindowPolicy,
    /// `(a, b)` per separation.
    pub pairs: Vec<(LatticePoint, LatticePoint)>,
}

/// `(T(0, a), T(0, b))` per separation, from one tree.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSample {
    pub pairs: Vec<(f64, f64)>,
}

impl ReplicateKernel for CorrelationKernel {
    type Output = CorrelationSample;

    fn run(&self, i: usize) -> Result<CorrelationSample, EngineError> {
        let field = self
            .plan
            .field(self.distribution, i)
            .expect("distribution validated by the lab");
        let mut targets: Vec<LatticePoint> =
            self.pairs.iter().flat_map(|(a, b)| [*a, *b]).collect();
        targets.sort();
        targets.dedup();
        let (tree, _) = source_tree_covering(&field, LatticePoint::ORIGIN, &targets, &self.policy)?;
        let t = |p: LatticePoint| tree.dist(p).expect("targets are settled");
        Ok(CorrelationSample {
            pairs: self.pairs.iter().map(|(a, b)| (t(*a), t(*b))).collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEstimate {
    pub j: f64,
    /// Half-separation `J Delta(n) (log n)^{1/2}` along the tangent.
    pub offset: f64,
    pub a: LatticePoint,
    pub b: LatticePoint,
    pub n_replicates: usize,
    pub failures: usize,
    pub covariance: f64,
    pub covariance_std_error: f64,
    pub covariance_ci: (f64, f64),
    pub correlation: f64,
    pub correlation_ci: (f64, f64),
}

impl CorrelationEstimate {
    /// Aggregates paired samples; `seed` drives the bootstrap.
    pub fn from_pairs(
        j: f64,
        offset: f64,
        a: LatticePoint,
        b: LatticePoint,
        pairs: &[(f64, f64)],
        failures: usize,
        seed: u64,
    ) -> Self {
        let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let n = pairs.len();
        let covariance = stats::covariance(&xs, &ys);
        let (mx, my) = (stats::mean(&xs), stats::mean(&ys));
        let products: Vec<f64> = pairs.iter().map(|(x, y)| (x - mx) * (y - my)).collect();
        let covariance_std_error = (stats::variance(&products) / n as f64).sqrt();
        let identical = a == b;
        let correlation = if identical {
            1.0
        } else {
            stats::correlation(&xs, &ys).unwrap_or(0.0)
        };
        let pick = |idx: &[usize]| -> (Vec<f64>, Vec<f64>) {
            (
                idx.iter().map(|&i| xs[i]).collect(),
                idx.iter().map(|&i| ys[i]).collect(),
            )
        };
        let cov_ci = stats::bootstrap_percentile(
            n,
            BOOTSTRAP_RESAMPLES,
            CORRELATION_CI_LEVEL,
            seed,
            |idx| {
                let (x, y) = pick(idx);
                Some(stats::covariance(&x, &y))
            },
        )
        .map_or((covariance, covariance), |ci| (ci.low, ci.high));
        let corr_ci = if identical {
            (1.0, 1.0)
        } else {
            stats::bootstrap_percentile(
                n,
                BOOTSTRAP_RESAMPLES,
                CORRELATION_CI_LEVEL,
                seed ^ 0x5bd1_e995,
                |idx| {
                    let (x, y) = pick(idx);
                    stats::correlation(&x, &y)
                },
            )
            .map_or((correlation, correlation), |ci| (ci.low, ci.high))
        };
        Self {
            j,
            offset,
            a,
            b,
            n_replicates: n,
            failures,
            covariance,
            covariance_std_error,
            covariance_ci: cov_ci,
            correlation,
            correlation_ci: corr_ci,
        }
    }
}

impl<R: ReplicateRunner> Lab<R> {
    /// Target pairs for each `J`; fails when a half-separation exceeds
    /// [`MAX_OFFSET_RATIO`] times `n`.
    pub fn correlation_pairs(
        &self,
        frame: &DirectionFrame,
        n: f64,
        js: &[f64],
        delta_n: f64,
    ) -> Result<Vec<(f64, LatticePoint, LatticePoint)>, EstimatorError> {
        if !(n > 1.0) || !(delta_n > 0.0) {
            return Err(EstimatorError::InvalidArgument(
                "need n > 1 and Delta(n) > 0".into(),
            ));
        }
        js.iter()
            .map(|&j| {
                let offset = j * delta_n * n.ln().sqrt();
                if offset > MAX_OFFSET_RATIO * n {
                    return Err(EstimatorError::SeparationTooLarge {
                        separation: 2.0 * offset,
                        n,
                    });
                }
                Ok((
                    offset,
                    lattice_point_at(frame, n, -offset),
                    lattice_point_at(frame, n, offset),
                ))
            })
            .collect()
    }

    pub fn long_range_ladder(
        &self,
        frame: &DirectionFrame,
        n: f64,
        js: &[f64],
        delta_n: f64,
    ) -> Result<Vec<CorrelationEstimate>, EstimatorError> {
        self.distribution.validate()?;
        let targets = self.correlation_pairs(frame, n, js, delta_n)?;
        let kernel = CorrelationKernel {
            distribution: self.distribution,
            plan: self.plan,
            policy: self.policy,
            pairs: targets.iter().map(|(_, a, b)| (*a, *b)).collect(),
        };
        let c = self.collect(&kernel)?;
        Ok(targets
            .iter()
            .enumerate()
            .map(|(k, &(offset, a, b))| {
                let pairs: Vec<(f64, f64)> = c.ok.iter().map(|(_, s)| s.pairs[k]).collect();
                CorrelationEstimate::from_pairs(
                    js[k],
                    offset,
                    a,
                    b,
                    &pairs,
                    c.failed.len(),
                    self.plan.master_seed ^ k as u64,
                )
            })
            .collect())
    }

    pub fn long_range_correlation(
        &self,
        frame: &DirectionFrame,
        n: f64,
        j: f64,
        delta_n: f64,
    ) -> Result<CorrelationEstimate, EstimatorError> {
        Ok(self.long_range_ladder(frame, n, &[j], delta_n)?.remove(0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lab(seed: u64, reps: usize) -> Lab {
        Lab::new(
            WeightDistribution::exponential(1.0).unwrap(),
            ReplicatePlan::new(seed, reps),
        )
    }

    #[test]
    fn zero_separation_is_fully_correlated() {
        let e = lab(1, 30)
            .long_range_correlation(&DirectionFrame::diagonal(), 16.0, 0.0, 3.0)
            .unwrap();
        assert_eq!(e.a, e.b);
        assert_eq!(e.correlation, 1.0);
    }

    #[test]
    fn covariance_is_not_significantly_negative() {
        let ests = lab(2, 200)
            .long_range_ladder(&DirectionFrame::axis(), 16.0, &[0.5, 1.0], 3.0)
            .unwrap();
        for e in ests {
            assert!(e.covariance >= -3.0 * e.covariance_std_error, "{e:?}");
            assert!(e.correlation_ci.0 <= e.correlation_ci.1);
        }
    }

    #[test]
    fn oversized_separation_is_rejected() {
        let r = lab(1, 2).long_range_correlation(&DirectionFrame::axis(), 16.0, 10.0, 3.0);
        assert!(matches!(r, Err(EstimatorError::SeparationTooLarge { .. })));
    }
}

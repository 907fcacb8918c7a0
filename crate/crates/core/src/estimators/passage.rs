//! Point-to-point statistics: mean passage time, fluctuation scale,
//! geodesic wandering and nonrandom fluctuations.

use serde::{Deserialize, Serialize};

use super::{Estimate, EstimatorError, Lab, ReplicateKernel, ReplicatePlan, ReplicateRunner};
use crate::engine::{
    passage_time, wandering, EngineError, GeodesicResult, HSurrogate, WindowPolicy,
};
use crate::geometry::{lattice_point_at, DirectionFrame, LatticePoint};
use crate::weights::WeightDistribution;

/// `T(0, target)` with its geodesic, one replicate at a time.
#[derive(Debug, Clone)]
pub struct PassageKernel {
    pub distribution: WeightDistribution,
    pub plan: ReplicatePlan,
    pub policy: WindowPolicy,
    pub target: LatticePoint,
}

impl ReplicateKernel for PassageKernel {
    type Output = GeodesicResult;

    fn run(&self, i: usize) -> Result<GeodesicResult, EngineError> {
        let field = self
            .plan
            .field(self.distribution, i)
            .expect("distribution validated by the lab");
        passage_time(&field, LatticePoint::ORIGIN, self.target, &self.policy)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WanderingSample {
    pub geodesic: GeodesicResult,
    /// `None` where the geodesic never reaches the requested `k`.
    pub wandering: Vec<Option<f64>>,
}

/// Geodesic `Gamma(0, n u_theta)` and its wandering at each `k`.
#[derive(Debug, Clone)]
pub struct WanderingKernel {
    pub distribution: WeightDistribution,
    pub plan: ReplicatePlan,
    pub policy: WindowPolicy,
    pub frame: DirectionFrame,
    pub n: f64,
    pub ks: Vec<f64>,
}

impl WanderingKernel {
    pub fn target(&self) -> LatticePoint {
        lattice_point_at(&self.frame, self.n, 0.0)
    }
}

impl ReplicateKernel for WanderingKernel {
    type Output = WanderingSample;

    fn run(&self, i: usize) -> Result<WanderingSample, EngineError> {
        let field = self
            .plan
            .field(self.distribution, i)
            .expect("distribution validated by the lab");
        let geodesic = passage_time(&field, LatticePoint::ORIGIN, self.target(), &self.policy)?;
        let wandering = self
            .ks
            .iter()
            .map(|&k| match wandering(&geodesic.path, &self.frame, k) {
                Ok(w) => Ok(Some(w)),
                Err(EngineError::NoCrossing { .. }) => Ok(None),
                Err(e) => Err(e),
            })
            .collect::<Result<_, _>>()?;
        Ok(WanderingSample {
            geodesic,
            wandering,
        })
    }
}

/// Tail occupation of standardized samples `(T - mean) / sd`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailDiagnostics {
    pub above_four_sd: f64,
    pub below_minus_half_sd: f64,
    pub above_half_sd: f64,
}

impl TailDiagnostics {
    pub fn from_values(values: &[f64]) -> Self {
        let m = crate::stats::mean(values);
        let sd = crate::stats::variance(values).sqrt();
        let n = values.len() as f64;
        let frac =
            |pred: &dyn Fn(f64) -> bool| values.iter().filter(|v| pred(**v)).count() as f64 / n;
        if sd == 0.0 {
            return Self {
                above_four_sd: 0.0,
                below_minus_half_sd: 0.0,
                above_half_sd: 0.0,
            };
        }
        Self {
            above_four_sd: frac(&|v| (v - m) / sd > 4.0),
            below_minus_half_sd: frac(&|v| v < m - 0.5 * sd),
            above_half_sd: frac(&|v| v > m + 0.5 * sd),
        }
    }
}

/// Fluctuation scale at distance `r`: the sample standard deviation of
/// `T(0, r u_theta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaEstimate {
    pub r: f64,
    pub target: LatticePoint,
    pub times: Estimate,
    pub sigma_hat: f64,
    pub tails: TailDiagnostics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WanderingAtK {
    pub k: f64,
    pub estimate: Option<Estimate>,
    pub no_crossing: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WanderingProfile {
    pub n: f64,
    pub target: LatticePoint,
    pub times: Estimate,
    pub by_k: Vec<WanderingAtK>,
}

/// One rung of the nonrandom-fluctuation ladder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonrandomPoint {
    pub n: f64,
    /// Euclidean length of the lattice target.
    pub norm: f64,
    pub h_hat: f64,
    pub h_std_error: f64,
    pub sigma_hat: f64,
    pub g_hat: f64,
    /// `h_hat - norm * g_hat`.
    pub value: f64,
    pub value_std_error: f64,
    /// `value / (sigma_hat * ln norm)`.
    pub ratio: f64,
}

impl<R: ReplicateRunner> Lab<R> {
    fn passage_kernel(&self, target: LatticePoint) -> PassageKernel {
        PassageKernel {
            distribution: self.distribution,
            plan: self.plan,
            policy: self.policy,
            target,
        }
    }

    /// Sample of `T(0, target)`; estimates `h(target) = E T(0, target)`.
    pub fn estimate_h(&self, target: impl Into<LatticePoint>) -> Result<Estimate, EstimatorError> {
        let target = target.into();
        if target == LatticePoint::ORIGIN {
            return Err(EstimatorError::InvalidArgument(
                "target floors to the origin".into(),
            ));
        }
        self.distribution.validate()?;
        let c = self.collect(&self.passage_kernel(target))?;
        Estimate::from_values(c.column(|g| g.time), c.failed)
    }

    pub fn estimate_sigma(
        &self,
        r: f64,
        frame: &DirectionFrame,
    ) -> Result<SigmaEstimate, EstimatorError> {
        if !(r >= 4.0) {
            return Err(EstimatorError::InvalidArgument(format!(
                "r = {r} must be at least 4"
            )));
        }
        let target = lattice_point_at(frame, r, 0.0);
        let times = self.estimate_h(target)?;
        Ok(SigmaEstimate {
            r,
            target,
            sigma_hat: times.summary.std_dev(),
            tails: TailDiagnostics::from_values(&times.values),
            times,
        })
    }

    pub fn wandering_kernel(&self, frame: &DirectionFrame, n: f64, ks: &[f64]) -> WanderingKernel {
        WanderingKernel {
            distribution: self.distribution,
            plan: self.plan,
            policy: self.policy,
            frame: *frame,
            n,
            ks: ks.to_vec(),
        }
    }

    /// Wandering of `Gamma(0, n u_theta)` at each `k`, together with the
    /// passage times of the same geodesics.
    pub fn wandering_profile(
        &self,
        frame: &DirectionFrame,
        n: f64,
        ks: &[f64],
    ) -> Result<WanderingProfile, EstimatorError> {
        if !(n > 0.0) {
            return Err(EstimatorError::InvalidArgument("n must be positive".into()));
        }
        self.distribution.validate()?;
        let kernel = self.wandering_kernel(frame, n, ks);
        let target = kernel.target();
        if target == LatticePoint::ORIGIN {
            return Err(EstimatorError::InvalidArgument(
                "target floors to the origin".into(),
            ));
        }
        let c = self.collect(&kernel)?;
        let times = Estimate::from_values(c.column(|s| s.geodesic.time), c.failed.clone())?;
        let by_k = ks
            .iter()
            .enumerate()
            .map(|(j, &k)| {
                let vals: Vec<f64> = c.ok.iter().filter_map(|(_, s)| s.wandering[j]).collect();
                let no_crossing = c.ok.len() - vals.len();
                let estimate = if vals.is_empty() {
                    None
                } else {
                    Estimate::from_values(vals, c.failed.clone()).ok()
                };
                WanderingAtK {
                    k,
                    estimate,
                    no_crossing,
                }
            })
            .collect();
        Ok(WanderingProfile {
            n,
            target,
            times,
            by_k,
        })
    }

    /// `h_hat(n) - |x_n| g_hat` along the ladder, with `g_hat` the smallest
    /// ladder value of `h_hat(n) / |x_n|`.
    pub fn nonrandom_fluctuation(
        &self,
        frame: &DirectionFrame,
        ladder: &[f64],
    ) -> Result<Vec<NonrandomPoint>, EstimatorError> {
        if ladder.len() < 3 || ladder.windows(2).any(|w| w[0] >= w[1]) {
            return Err(EstimatorError::InvalidArgument(
                "ladder must be increasing with at least 3 rungs".into(),
            ));
        }
        let mut rungs = Vec::with_capacity(ladder.len());
        for &n in ladder {
            let target = lattice_point_at(frame, n, 0.0);
            let est = self.estimate_h(target)?;
            rungs.push((n, target.euclidean_distance(LatticePoint::ORIGIN), est));
        }
        Ok(nonrandom_from_rungs(&rungs))
    }

    /// Angular-norm surrogate for `h` from `h_hat` at distance `n` along the
    /// axis and the diagonal.
    pub fn fit_h_surrogate(&self, n: f64) -> Result<HSurrogate, EstimatorError> {
        let axis = lattice_point_at(&DirectionFrame::axis(), n, 0.0);
        let diag = lattice_point_at(&DirectionFrame::diagonal(), n, 0.0);
        let ha = self.estimate_h(axis)?.summary.mean;
        let hd = self.estimate_h(diag)?.summary.mean;
        Ok(HSurrogate::AngularNorm {
            axis_rate: ha / axis.euclidean_distance(LatticePoint::ORIGIN),
            diagonal_rate: hd / diag.euclidean_distance(LatticePoint::ORIGIN),
        })
    }
}

/// Aggregates ladder rungs `(n, |x_n|, T samples)` into nonrandom
/// fluctuation points.
pub fn nonrandom_from_rungs(rungs: &[(f64, f64, Estimate)]) -> Vec<NonrandomPoint> {
    let (best, g_hat) = rungs
        .iter()
        .enumerate()
        .map(|(j, (_, norm, e))| (j, e.summary.mean / norm))
        .fold(
            (0, f64::INFINITY),
            |acc, cur| if cur.1 < acc.1 { cur } else { acc },
        );
    let (_, best_norm, best_est) = &rungs[best];
    rungs
        .iter()
        .enumerate()
        .map(|(j, (n, norm, e))| {
            let s = &e.summary;
            let value = s.mean - norm * g_hat;
            let value_std_error = if j == best {
                0.0
            } else {
                (s.std_error.powi(2) + (norm / best_norm * best_est.summary.std_error).powi(2))
                    .sqrt()
            };
            let sigma_hat = s.std_dev();
            NonrandomPoint {
                n: *n,
                norm: *norm,
                h_hat: s.mean,
                h_std_error: s.std_error,
                sigma_hat,
                g_hat,
                value,
                value_std_error,
                ratio: value / (sigma_hat * norm.ln()),
            }
        })
        .collect()
}

//! Conditional variance decompositions by partial resampling.
//!
//! Weights inside a conditioning region are kept and every edge with an
//! endpoint outside it is redrawn from an independent stream. Given the
//! inside weights, `T` and the resampled `T'` are then independent with the
//! same law, so `E Var(T | F) = E (T - T')^2 / 2` and
//! `Var E(T | F) = Cov(T, T')`.

use serde::{Deserialize, Serialize};

use super::{
    EstimatorError, Lab, ReplicateKernel, ReplicatePlan, ReplicateRunner, BOOTSTRAP_RESAMPLES,
    RESAMPLE_STREAM,
};
use crate::engine::{
    h_ball_boundary, hitting_time, source_tree_covering, EngineError, HSurrogate, Resampled,
    Window, WindowPolicy, HBALL_CONTAINMENT,
};
use crate::geometry::{DirectionFrame, LatticePoint};
use crate::stats;
use crate::weights::{EdgeId, WeightDistribution};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConditioningRegion {
    /// Keep weights on edges with both endpoints in `{x : pi1(x) <= m}`.
    HalfSpace { m: f64 },
    /// Keep weights on edges with both endpoints in the wet region frozen
    /// when it first reaches the h-ball of radius `k` around `a`.
    HBall { k: f64, surrogate: HSurrogate },
}

#[derive(Debug, Clone)]
pub struct ConditionalKernel {
    pub distribution: WeightDistribution,
    pub plan: ReplicatePlan,
    pub policy: WindowPolicy,
    pub frame: DirectionFrame,
    pub region: ConditioningRegion,
    pub a: LatticePoint,
    pub b: LatticePoint,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionalSample {
    pub t_a: f64,
    pub t_b: f64,
    pub t_a_resampled: f64,
    pub t_b_resampled: f64,
    /// Size of the frozen wet region (h-ball construction only).
    pub frozen: Option<usize>,
}

struct Mask {
    window: Window,
    inside: Vec<bool>,
}

impl Mask {
    fn contains(&self, p: LatticePoint) -> bool {
        self.window.contains(p) && self.inside[self.window.index(p)]
    }
}

impl ConditionalKernel {
    fn frozen_mask(&self, field: &crate::weights::EdgeWeightField) -> Result<Mask, EngineError> {
        let ConditioningRegion::HBall { k, surrogate } = self.region else {
            unreachable!("only the h-ball region needs a frozen set")
        };
        let ball = h_ball_boundary(|v| surrogate.eval(v), self.a, k, HBALL_CONTAINMENT)?;
        if ball.members.contains(&LatticePoint::ORIGIN) {
            return Err(EngineError::InvalidArgument(
                "the h-ball contains the origin".into(),
            ));
        }
        let mut pts: Vec<LatticePoint> = ball.members.iter().copied().collect();
        pts.push(LatticePoint::ORIGIN);
        let margin = self.policy.initial_margin(LatticePoint::ORIGIN, &[self.a]);
        let window = Window::around(&pts, margin);
        let hit = hitting_time(field, LatticePoint::ORIGIN, &ball.members, &window)?;
        let mut inside = vec![false; window.area()];
        for p in &hit.frozen {
            inside[window.index(*p)] = true;
        }
        Ok(Mask { window, inside })
    }
}

impl ReplicateKernel for ConditionalKernel {
    type Output = ConditionalSample;

    fn run(&self, i: usize) -> Result<ConditionalSample, EngineError> {
        let field = self
            .plan
            .field(self.distribution, i)
            .expect("distribution validated by the lab");
        let targets = [self.a, self.b];
        let (tree, _) = source_tree_covering(&field, LatticePoint::ORIGIN, &targets, &self.policy)?;
        let t = |p| tree.dist(p).expect("targets are settled");
        let (t_a, t_b) = (t(self.a), t(self.b));

        let (t_a_resampled, t_b_resampled, frozen) = match self.region {
            ConditioningRegion::HalfSpace { m } => {
                let frame = self.frame;
                let inside = move |p: LatticePoint| frame.project_lattice(p).0 <= m;
                let outside_edge = move |e: EdgeId| {
                    let (u, v) = e.endpoints();
                    !inside(u) || !inside(v)
                };
                let w = Resampled::new(&field, RESAMPLE_STREAM, outside_edge)?;
                let (alt, _) =
                    source_tree_covering(&w, LatticePoint::ORIGIN, &targets, &self.policy)?;
                (alt.dist(self.a).unwrap(), alt.dist(self.b).unwrap(), None)
            }
            ConditioningRegion::HBall { .. } => {
                let mask = self.frozen_mask(&field)?;
                let size = mask.inside.iter().filter(|b| **b).count();
                let outside_edge = |e: EdgeId| {
                    let (u, v) = e.endpoints();
                    !mask.contains(u) || !mask.contains(v)
                };
                let w = Resampled::new(&field, RESAMPLE_STREAM, outside_edge)?;
                let (alt, _) =
                    source_tree_covering(&w, LatticePoint::ORIGIN, &targets, &self.policy)?;
                (
                    alt.dist(self.a).unwrap(),
                    alt.dist(self.b).unwrap(),
                    Some(size),
                )
            }
        };
        Ok(ConditionalSample {
            t_a,
            t_b,
            t_a_resampled,
            t_b_resampled,
            frozen,
        })
    }
}

/// Moments of one target under the decomposition
/// `Var T = E Var(T | F) + Var E(T | F)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetDecomposition {
    pub variance: f64,
    pub variance_std_error: f64,
    /// `E (T - T')^2 / 2`.
    pub exp_cond_var: f64,
    pub exp_cond_var_std_error: f64,
    /// `Cov(T, T')`.
    pub var_cond_mean: f64,
    /// `Var T - (E Var(T | F) + Var E(T | F))`.
    pub total_variance_gap: f64,
    /// Bootstrap standard deviation of the gap.
    pub total_variance_gap_std_error: f64,
}

impl TargetDecomposition {
    fn from_samples(t: &[f64], t_alt: &[f64], seed: u64) -> Self {
        let half_sq: Vec<f64> = t
            .iter()
            .zip(t_alt)
            .map(|(x, y)| 0.5 * (x - y) * (x - y))
            .collect();
        let n = t.len() as f64;
        let gap = |t: &[f64], alt: &[f64]| {
            let hs = stats::mean(
                &t.iter()
                    .zip(alt)
                    .map(|(x, y)| 0.5 * (x - y) * (x - y))
                    .collect::<Vec<_>>(),
            );
            stats::variance(t) - hs - stats::covariance(t, alt)
        };
        let spread = stats::bootstrap_percentile(t.len(), BOOTSTRAP_RESAMPLES, 0.9, seed, |idx| {
            let a: Vec<f64> = idx.iter().map(|&i| t[i]).collect();
            let b: Vec<f64> = idx.iter().map(|&i| t_alt[i]).collect();
            Some(gap(&a, &b))
        })
        .map_or(0.0, |ci| ci.spread);
        Self {
            variance: stats::variance(t),
            variance_std_error: stats::variance_std_error(t),
            exp_cond_var: stats::mean(&half_sq),
            exp_cond_var_std_error: (stats::variance(&half_sq) / n).sqrt(),
            var_cond_mean: stats::covariance(t, t_alt),
            total_variance_gap: gap(t, t_alt),
            total_variance_gap_std_error: spread,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalDecomposition {
    pub region: ConditioningRegion,
    pub a: LatticePoint,
    pub b: LatticePoint,
    pub n_replicates: usize,
    pub failures: usize,
    pub target_a: TargetDecomposition,
    pub target_b: TargetDecomposition,
    pub exp_cond_var_a: f64,
    pub exp_cond_var_b: f64,
    /// `sqrt(E Var(T_a | F) E Var(T_b | F))`, the Cauchy-Schwarz bound on
    /// `E Cov(T_a, T_b | F)`.
    pub exp_cond_cov_bound: f64,
    pub covariance: f64,
    /// `Cov(T_a, T_b) - exp_cond_cov_bound`. Descriptive only.
    pub cov_of_cond_means: f64,
    pub non_rigorous: bool,
    pub mean_frozen_size: Option<f64>,
}

impl ConditionalDecomposition {
    pub fn from_samples(
        region: ConditioningRegion,
        a: LatticePoint,
        b: LatticePoint,
        samples: &[ConditionalSample],
        failures: usize,
        seed: u64,
    ) -> Self {
        let col = |f: fn(&ConditionalSample) -> f64| samples.iter().map(f).collect::<Vec<f64>>();
        let (ta, tb) = (col(|s| s.t_a), col(|s| s.t_b));
        let (ra, rb) = (col(|s| s.t_a_resampled), col(|s| s.t_b_resampled));
        let target_a = TargetDecomposition::from_samples(&ta, &ra, seed);
        let target_b = TargetDecomposition::from_samples(&tb, &rb, seed ^ 1);
        let bound = (target_a.exp_cond_var * target_b.exp_cond_var).sqrt();
        let covariance = stats::covariance(&ta, &tb);
        let frozen: Vec<f64> = samples
            .iter()
            .filter_map(|s| s.frozen.map(|f| f as f64))
            .collect();
        Self {
            region,
            a,
            b,
            n_replicates: samples.len(),
            failures,
            exp_cond_var_a: target_a.exp_cond_var,
            exp_cond_var_b: target_b.exp_cond_var,
            target_a,
            target_b,
            exp_cond_cov_bound: bound,
            covariance,
            cov_of_cond_means: covariance - bound,
            non_rigorous: true,
            mean_frozen_size: (!frozen.is_empty()).then(|| stats::mean(&frozen)),
        }
    }
}

impl<R: ReplicateRunner> Lab<R> {
    pub fn conditional_kernel(
        &self,
        frame: &DirectionFrame,
        region: ConditioningRegion,
        a: LatticePoint,
        b: LatticePoint,
    ) -> ConditionalKernel {
        ConditionalKernel {
            distribution: self.distribution,
            plan: self.plan,
            policy: self.policy,
            frame: *frame,
            region,
            a,
            b,
        }
    }

    pub fn conditional_decomposition(
        &self,
        frame: &DirectionFrame,
        region: ConditioningRegion,
        a: LatticePoint,
        b: LatticePoint,
    ) -> Result<ConditionalDecomposition, EstimatorError> {
        self.distribution.validate()?;
        if a == LatticePoint::ORIGIN || b == LatticePoint::ORIGIN {
            return Err(EstimatorError::InvalidArgument(
                "targets must differ from the origin".into(),
            ));
        }
        let kernel = self.conditional_kernel(frame, region, a, b);
        let c = self.collect(&kernel)?;
        let samples: Vec<ConditionalSample> = c.ok.iter().map(|(_, s)| *s).collect();
        Ok(ConditionalDecomposition::from_samples(
            region,
            a,
            b,
            &samples,
            c.failed.len(),
            self.plan.master_seed,
        ))
    }
}

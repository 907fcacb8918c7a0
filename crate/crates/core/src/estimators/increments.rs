//! Transverse increments: the spread `D(n, L)` of passage times over a
//! tangential segment and the endpoint increment `T(0, a) - T(0, b)`.

use super::{Estimate, EstimatorError, Lab, ReplicateKernel, ReplicatePlan, ReplicateRunner};
use crate::engine::{source_tree_covering, EngineError, WindowPolicy};
use crate::geometry::{lattice_point_at, DirectionFrame, LatticePoint, TransverseSegment};
use crate::weights::WeightDistribution;

#[derive(Debug, Clone)]
pub struct IncrementKernel {
    pub distribution: WeightDistribution,
    pub plan: ReplicatePlan,
    pub policy: WindowPolicy,
    pub frame: DirectionFrame,
    pub n: f64,
    pub lengths: Vec<f64>,
    segments: Vec<Vec<LatticePoint>>,
    targets: Vec<LatticePoint>,
}

/// `D(n, L)` and `T(0, a) - T(0, b)` for every length, from one tree.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementSample {
    pub spread: Vec<f64>,
    pub increment: Vec<f64>,
}

impl IncrementKernel {
    pub fn new(
        distribution: WeightDistribution,
        plan: ReplicatePlan,
        policy: WindowPolicy,
        frame: DirectionFrame,
        n: f64,
        lengths: &[f64],
    ) -> Result<Self, EstimatorError> {
        let mut segments = Vec::with_capacity(lengths.len());
        for &len in lengths {
            if !(len >= 0.0) {
                return Err(EstimatorError::InvalidArgument(format!(
                    "segment length {len} is negative"
                )));
            }
            let pts = if len == 0.0 {
                vec![lattice_point_at(&frame, n, 0.0)]
            } else {
                TransverseSegment::new(frame, n, len, 0.0)
                    .map_err(|e| EstimatorError::InvalidArgument(e.to_string()))?
                    .lattice_points()
            };
            segments.push(pts);
        }
        let mut targets: Vec<LatticePoint> = segments.iter().flatten().copied().collect();
        targets.sort();
        targets.dedup();
        if targets.contains(&LatticePoint::ORIGIN) {
            return Err(EstimatorError::InvalidArgument(
                "segment contains the origin".into(),
            ));
        }
        Ok(Self {
            distribution,
            plan,
            policy,
            frame,
            n,
            lengths: lengths.to_vec(),
            segments,
            targets,
        })
    }

    pub fn segment(&self, j: usize) -> &[LatticePoint] {
        &self.segments[j]
    }
}

impl ReplicateKernel for IncrementKernel {
    type Output = IncrementSample;

    fn run(&self, i: usize) -> Result<IncrementSample, EngineError> {
        let field = self
            .plan
            .field(self.distribution, i)
            .expect("distribution validated by the lab");
        let (tree, _) =
            source_tree_covering(&field, LatticePoint::ORIGIN, &self.targets, &self.policy)?;
        let t = |p: LatticePoint| tree.dist(p).expect("targets are settled");
        let mut spread = Vec::with_capacity(self.lengths.len());
        let mut increment = Vec::with_capacity(self.lengths.len());
        for (j, &len) in self.lengths.iter().enumerate() {
            let seg = &self.segments[j];
            let (lo, hi) = seg
                .iter()
                .map(|p| t(*p))
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                    (lo.min(v), hi.max(v))
                });
            spread.push(hi - lo);
            let a = lattice_point_at(&self.frame, self.n, 0.0);
            let b = lattice_point_at(&self.frame, self.n, len);
            increment.push(t(a) - t(b));
        }
        Ok(IncrementSample { spread, increment })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IncrementRung {
    pub length: f64,
    pub lattice_points: usize,
    /// `D(n, L)`.
    pub spread: Estimate,
    /// `T(0, n u_theta) - T(0, n u_theta + L u_theta_t)`.
    pub increment: Estimate,
    /// Whether `L` exceeds the supplied `Delta_hat(n)`; the bounds on `D`
    /// are stated for `L <= Delta(n)`.
    pub beyond_delta: Option<bool>,
}

impl<R: ReplicateRunner> Lab<R> {
    pub fn increment_kernel(
        &self,
        frame: &DirectionFrame,
        n: f64,
        lengths: &[f64],
    ) -> Result<IncrementKernel, EstimatorError> {
        IncrementKernel::new(
            self.distribution,
            self.plan,
            self.policy,
            *frame,
            n,
            lengths,
        )
    }

    /// Every length of the ladder from one source tree per replicate.
    pub fn increment_ladder(
        &self,
        frame: &DirectionFrame,
        n: f64,
        lengths: &[f64],
        delta_hat: Option<f64>,
    ) -> Result<Vec<IncrementRung>, EstimatorError> {
        self.distribution.validate()?;
        let kernel = self.increment_kernel(frame, n, lengths)?;
        let c = self.collect(&kernel)?;
        lengths
            .iter()
            .enumerate()
            .map(|(j, &length)| {
                Ok(IncrementRung {
                    length,
                    lattice_points: kernel.segment(j).len(),
                    spread: Estimate::from_values(c.column(|s| s.spread[j]), c.failed.clone())?,
                    increment: Estimate::from_values(
                        c.column(|s| s.increment[j]),
                        c.failed.clone(),
                    )?,
                    beyond_delta: delta_hat.map(|d| length > d),
                })
            })
            .collect()
    }

    /// Sample of `D(n, L) = max |T(0, x) - T(0, y)|` over the segment.
    pub fn transverse_increment(
        &self,
        frame: &DirectionFrame,
        n: f64,
        length: f64,
    ) -> Result<Estimate, EstimatorError> {
        let mut r = self.increment_ladder(frame, n, &[length], None)?;
        Ok(r.remove(0).spread)
    }

    /// Sample of `T(0, a) - T(0, b)`; its variance estimates the increment
    /// variance.
    pub fn increment_variance(
        &self,
        frame: &DirectionFrame,
        n: f64,
        length: f64,
    ) -> Result<Estimate, EstimatorError> {
        let mut r = self.increment_ladder(frame, n, &[length], None)?;
        Ok(r.remove(0).increment)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::passage_time;
    use crate::estimators::Sequential;

    fn lab(seed: u64, reps: usize) -> Lab<Sequential> {
        Lab::new(
            WeightDistribution::exponential(1.0).unwrap(),
            ReplicatePlan::new(seed, reps),
        )
    }

    #[test]
    fn single_point_segment_has_zero_spread() {
        let d = lab(1, 5)
            .transverse_increment(&DirectionFrame::axis(), 6.0, 0.5)
            .unwrap();
        assert!(d.values.iter().all(|v| *v == 0.0));
        let v = lab(1, 5)
            .increment_variance(&DirectionFrame::axis(), 6.0, 0.0)
            .unwrap();
        assert_eq!(v.summary.variance, 0.0);
    }

    #[test]
    fn spread_dominates_endpoint_increment() {
        let l = lab(2, 20);
        let rungs = l
            .increment_ladder(&DirectionFrame::diagonal(), 12.0, &[3.0, 6.0], None)
            .unwrap();
        for r in &rungs {
            for (d, inc) in r.spread.values.iter().zip(&r.increment.values) {
                assert!(*d >= inc.abs());
            }
        }
    }

    #[test]
    fn spread_matches_pairwise_queries() {
        let l = lab(3, 10);
        let frame = DirectionFrame::axis();
        let kernel = l.increment_kernel(&frame, 3.0, &[3.0]).unwrap();
        let seg = kernel.segment(0).to_vec();
        assert_eq!(seg.len(), 4);
        for i in 0..10 {
            let got = kernel.run(i).unwrap().spread[0];
            let f = l.plan.field(l.distribution, i).unwrap();
            let times: Vec<f64> = seg
                .iter()
                .map(|p| {
                    passage_time(&f, LatticePoint::ORIGIN, *p, &l.policy)
                        .unwrap()
                        .time
                })
                .collect();
            let mut brute = 0.0f64;
            for a in &times {
                for b in &times {
                    brute = brute.max((a - b).abs());
                }
            }
            assert!((got - brute).abs() <= 1e-12);
        }
    }
}

//! Monte Carlo estimators over independent replicate weight fields.
//!
//! Every replicate `i` owns one weight field seeded by
//! [`ReplicatePlan::replicate_seed`]; all passage times entering a contrast
//! statistic (increments, maxima over segments, covariances) are read from
//! that same field. Replicates that fail with a window or tie event are
//! excluded from summaries and counted.
//!
//! Each estimator is split into a per-replicate kernel (public, so that the
//! harness can checkpoint replicate by replicate) and an aggregation step.

mod conditional;
mod correlation;
mod increments;
mod passage;

pub use conditional::{
    ConditionalDecomposition, ConditionalKernel, ConditionalSample, ConditioningRegion,
    TargetDecomposition,
};
pub use correlation::{
    CorrelationEstimate, CorrelationKernel, CorrelationSample, CORRELATION_CI_LEVEL,
    MAX_OFFSET_RATIO,
};
pub use increments::{IncrementKernel, IncrementRung, IncrementSample};
pub use passage::{
    nonrandom_from_rungs, NonrandomPoint, PassageKernel, SigmaEstimate, TailDiagnostics,
    WanderingAtK, WanderingKernel, WanderingProfile, WanderingSample,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{EngineError, WindowPolicy};
use crate::stats;
use crate::weights::{mix64, EdgeWeightField, WeightDistribution, WeightError};

/// Fraction of failed replicates above which an estimate is rejected.
pub const FAILURE_BUDGET: f64 = 0.01;

/// Stream tag of the primary field of each replicate.
pub const PRIMARY_STREAM: u64 = 0;
/// Stream tag used for resampled edges.
pub const RESAMPLE_STREAM: u64 = 1;

pub const BOOTSTRAP_RESAMPLES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimatorError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Weights(#[from] WeightError),
    #[error("{failed} of {total} replicates failed, above the {budget} budget")]
    FailureBudgetExceeded {
        failed: usize,
        total: usize,
        budget: f64,
    },
    #[error("no successful replicates")]
    EmptySample,
    #[error("invalid estimator argument: {0}")]
    InvalidArgument(String),
    #[error("separation {separation} is too wide for distance {n} along theta")]
    SeparationTooLarge { separation: f64, n: f64 },
}

/// Seeds for a batch of independent replicates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplicatePlan {
    pub master_seed: u64,
    pub n_replicates: usize,
}

impl ReplicatePlan {
    pub fn new(master_seed: u64, n_replicates: usize) -> Self {
        Self {
            master_seed,
            n_replicates,
        }
    }

    /// Injective in `i`: an odd-stride Weyl sequence pushed through the
    /// splitmix64 bijection.
    pub fn replicate_seed(&self, i: usize) -> u64 {
        mix64(
            self.master_seed.wrapping_add(
                (i as u64)
                    .wrapping_add(1)
                    .wrapping_mul(0x9E37_79B9_7F4A_7C15),
            ),
        )
    }

    pub fn field(
        &self,
        distribution: WeightDistribution,
        i: usize,
    ) -> Result<EdgeWeightField, WeightError> {
        EdgeWeightField::new(distribution, self.replicate_seed(i), PRIMARY_STREAM)
    }

    pub fn indices(&self) -> Vec<usize> {
        (0..self.n_replicates).collect()
    }
}

/// Executes replicate kernels. Results come back in the order of
/// `indices`, whatever the scheduling.
pub trait ReplicateRunner: Sync {
    fn map_indices<T, F>(&self, indices: &[usize], f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl ReplicateRunner for Sequential {
    fn map_indices<T, F>(&self, indices: &[usize], f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync,
    {
        indices.iter().map(|&i| f(i)).collect()
    }
}

/// Per-replicate computation of an estimator.
pub trait ReplicateKernel: Sync {
    type Output: Send;

    fn run(&self, replicate: usize) -> Result<Self::Output, EngineError>;
}

/// Window and tie events end a replicate; anything else is a caller error.
pub fn is_replicate_failure(e: &EngineError) -> bool {
    matches!(
        e,
        EngineError::WindowExhausted { .. } | EngineError::MultipleContacts { .. }
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub q05: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub q95: f64,
}

pub const QUANTILE_LEVELS: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub n_replicates: usize,
    #[serde(default)]
    pub failures: usize,
    pub mean: f64,
    pub variance: f64,
    pub std_error: f64,
    #[serde(default)]
    pub variance_std_error: f64,
    pub quantiles: Quantiles,
    /// Set when fewer than two replicates succeeded; variance is then 0.
    #[serde(default)]
    pub degenerate: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_path: Option<String>,
}

impl SampleSummary {
    pub fn from_values(values: &[f64], failures: usize) -> Result<Self, EstimatorError> {
        if values.is_empty() {
            return Err(EstimatorError::EmptySample);
        }
        let n = values.len();
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let q = |l| stats::quantile_sorted(&sorted, l);
        let variance = stats::variance(values);
        Ok(Self {
            n_replicates: n,
            failures,
            mean: stats::mean(values),
            variance,
            std_error: (variance / n as f64).sqrt(),
            variance_std_error: stats::variance_std_error(values),
            quantiles: Quantiles {
                q05: q(0.05),
                q25: q(0.25),
                q50: q(0.5),
                q75: q(0.75),
                q95: q(0.95),
            },
            degenerate: n < 2,
            raw_path: None,
        })
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }

    pub fn median(&self) -> f64 {
        self.quantiles.q50
    }
}

/// Values of one statistic across replicates, in replicate order.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub summary: SampleSummary,
    pub values: Vec<f64>,
    pub failed: Vec<usize>,
}

impl Estimate {
    pub fn from_values(values: Vec<f64>, failed: Vec<usize>) -> Result<Self, EstimatorError> {
        let summary = SampleSummary::from_values(&values, failed.len())?;
        Ok(Self {
            summary,
            values,
            failed,
        })
    }
}

/// Successful replicate outputs (with their indices) and failed indices.
pub struct Collected<T> {
    pub ok: Vec<(usize, T)>,
    pub failed: Vec<usize>,
}

impl<T> Collected<T> {
    pub fn check_budget(&self, budget: f64) -> Result<(), EstimatorError> {
        let total = self.ok.len() + self.failed.len();
        if total > 0 && self.failed.len() as f64 > budget * total as f64 {
            return Err(EstimatorError::FailureBudgetExceeded {
                failed: self.failed.len(),
                total,
                budget,
            });
        }
        Ok(())
    }

    pub fn column(&self, f: impl Fn(&T) -> f64) -> Vec<f64> {
        self.ok.iter().map(|(_, t)| f(t)).collect()
    }
}

/// Shared context of every estimator: the weight law, the replicate plan,
/// the window policy and the runner that schedules replicates.
#[derive(Debug, Clone)]
pub struct Lab<R = Sequential> {
    pub distribution: WeightDistribution,
    pub plan: ReplicatePlan,
    pub policy: WindowPolicy,
    pub runner: R,
    pub failure_budget: f64,
}

impl Lab<Sequential> {
    pub fn new(distribution: WeightDistribution, plan: ReplicatePlan) -> Self {
        Self::with_runner(distribution, plan, Sequential)
    }
}

impl<R: ReplicateRunner> Lab<R> {
    pub fn with_runner(distribution: WeightDistribution, plan: ReplicatePlan, runner: R) -> Self {
        Self {
            distribution,
            plan,
            policy: WindowPolicy::default(),
            runner,
            failure_budget: FAILURE_BUDGET,
        }
    }

    pub fn with_policy(mut self, policy: WindowPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn with_plan(&self, plan: ReplicatePlan) -> Self
    where
        R: Clone,
    {
        Self {
            plan,
            ..self.clone()
        }
    }

    /// Runs `kernel` on every replicate of the plan, separating failures.
    pub fn collect<K: ReplicateKernel>(
        &self,
        kernel: &K,
    ) -> Result<Collected<K::Output>, EstimatorError> {
        let results = self
            .runner
            .map_indices(&self.plan.indices(), |i| kernel.run(i));
        let mut ok = Vec::with_capacity(results.len());
        let mut failed = Vec::new();
        for (i, r) in results.into_iter().enumerate() {
            match r {
                Ok(v) => ok.push((i, v)),
                Err(e) if is_replicate_failure(&e) => failed.push(i),
                Err(e) => return Err(e.into()),
            }
        }
        let collected = Collected { ok, failed };
        collected.check_budget(self.failure_budget)?;
        if collected.ok.is_empty() {
            return Err(EstimatorError::EmptySample);
        }
        Ok(collected)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn replicate_seeds_are_distinct() {
        let plan = ReplicatePlan::new(0, 100_000);
        let seeds: HashSet<u64> = (0..plan.n_replicates)
            .map(|i| plan.replicate_seed(i))
            .collect();
        assert_eq!(seeds.len(), plan.n_replicates);
    }

    #[test]
    fn summary_invariants() {
        let s = SampleSummary::from_values(&[3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0], 0).unwrap();
        assert!(s.variance >= 0.0);
        assert!((s.std_error - (s.variance / 8.0).sqrt()).abs() < 1e-15);
        let q = s.quantiles;
        assert!(q.q05 <= q.q25 && q.q25 <= q.q50 && q.q50 <= q.q75 && q.q75 <= q.q95);
        assert!(!s.degenerate);
    }

    #[test]
    fn single_replicate_is_degenerate() {
        let s = SampleSummary::from_values(&[2.5], 0).unwrap();
        assert_eq!(s.variance, 0.0);
        assert!(s.degenerate);
        assert_eq!(
            SampleSummary::from_values(&[], 0),
            Err(EstimatorError::EmptySample)
        );
    }

    #[test]
    fn failure_budget() {
        let c = Collected {
            ok: (0..99).map(|i| (i, ())).collect(),
            failed: vec![99],
        };
        assert!(c.check_budget(FAILURE_BUDGET).is_ok());
        let c = Collected {
            ok: (0..98).map(|i| (i, ())).collect(),
            failed: vec![98, 99],
        };
        assert!(c.check_budget(FAILURE_BUDGET).is_err());
    }
}

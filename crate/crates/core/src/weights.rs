//! Storage-free i.i.d. edge weights.
//!
//! Every weight is a pure function of `(distribution, master_seed,
//! stream_tag, edge)`: the key is hashed with a splitmix64-style finalizer to
//! a 53-bit uniform in `(0, 1)`, which is pushed through the inverse CDF of
//! the distribution. Nothing is stored, so windows of any size cost no
//! memory and traversal order never affects the values.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::LatticePoint;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WeightError {
    #[error("invalid distribution parameter `{param}`: {reason}")]
    InvalidParameter {
        param: &'static str,
        reason: &'static str,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Axis {
    Horizontal,
    Vertical,
}

/// Canonical undirected nearest-neighbour edge: `origin` is the
/// lexicographically smaller endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EdgeId {
    pub origin: LatticePoint,
    pub axis: Axis,
}

impl EdgeId {
    pub const fn new(origin: LatticePoint, axis: Axis) -> Self {
        Self { origin, axis }
    }

    /// The edge joining two lattice points, if they are nearest neighbours.
    pub fn between(a: LatticePoint, b: LatticePoint) -> Option<EdgeId> {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        match (hi.x - lo.x, hi.y - lo.y) {
            (1, 0) => Some(EdgeId::new(lo, Axis::Horizontal)),
            (0, 1) => Some(EdgeId::new(lo, Axis::Vertical)),
            _ => None,
        }
    }

    pub fn endpoints(self) -> (LatticePoint, LatticePoint) {
        let o = self.origin;
        let other = match self.axis {
            Axis::Horizontal => LatticePoint::new(o.x + 1, o.y),
            Axis::Vertical => LatticePoint::new(o.x, o.y + 1),
        };
        (o, other)
    }

    pub fn midpoint(self) -> crate::geometry::RealPoint {
        let o = self.origin;
        match self.axis {
            Axis::Horizontal => crate::geometry::RealPoint::new(o.x as f64 + 0.5, o.y as f64),
            Axis::Vertical => crate::geometry::RealPoint::new(o.x as f64, o.y as f64 + 0.5),
        }
    }
}

/// Continuous, nonnegative laws with a finite exponential moment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightDistribution {
    Exponential {
        rate: f64,
    },
    UniformShifted {
        lo: f64,
        hi: f64,
    },
    /// Shape below one has no exponential moment and is rejected.
    Weibull {
        shape: f64,
        scale: f64,
    },
}

impl WeightDistribution {
    pub fn exponential(rate: f64) -> Result<Self, WeightError> {
        let d = Self::Exponential { rate };
        d.validate()?;
        Ok(d)
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self, WeightError> {
        let d = Self::UniformShifted { lo, hi };
        d.validate()?;
        Ok(d)
    }

    pub fn weibull(shape: f64, scale: f64) -> Result<Self, WeightError> {
        let d = Self::Weibull { shape, scale };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<(), WeightError> {
        fn bad(param: &'static str, reason: &'static str) -> Result<(), WeightError> {
            Err(WeightError::InvalidParameter { param, reason })
        }
        match *self {
            Self::Exponential { rate } => {
                if !(rate.is_finite() && rate > 0.0) {
                    return bad("rate", "must be positive and finite");
                }
            }
            Self::UniformShifted { lo, hi } => {
                if !(lo.is_finite() && lo >= 0.0) {
                    return bad("lo", "must be nonnegative and finite");
                }
                if !(hi.is_finite() && hi > lo) {
                    return bad("hi", "must be finite and exceed lo");
                }
            }
            Self::Weibull { shape, scale } => {
                if !(shape.is_finite() && shape >= 1.0) {
                    return bad(
                        "shape",
                        "must be at least 1 for a finite exponential moment",
                    );
                }
                if !(scale.is_finite() && scale > 0.0) {
                    return bad("scale", "must be positive and finite");
                }
            }
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Self::Exponential { rate } => 1.0 / rate,
            Self::UniformShifted { lo, hi } => 0.5 * (lo + hi),
            Self::Weibull { shape, scale } => {
                scale * statrs::function::gamma::gamma(1.0 + 1.0 / shape)
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match *self {
            Self::Exponential { rate } => -(-rate * x).exp_m1(),
            Self::UniformShifted { lo, hi } => ((x - lo) / (hi - lo)).clamp(0.0, 1.0),
            Self::Weibull { shape, scale } => -(-(x / scale).powf(shape)).exp_m1(),
        }
    }

    /// Inverse CDF on `(0, 1)`.
    ///
    /// `u` is treated as the upper-tail probability for the exponential
    /// family (`-ln u`), which keeps full precision near zero.
    pub fn quantile_upper(&self, u: f64) -> f64 {
        match *self {
            Self::Exponential { rate } => -u.ln() / rate,
            Self::UniformShifted { lo, hi } => lo + (hi - lo) * (1.0 - u),
            Self::Weibull { shape, scale } => {
                let e = -u.ln();
                if shape == 1.0 {
                    scale * e
                } else {
                    scale * e.powf(1.0 / shape)
                }
            }
        }
    }

    /// Supremum of `C` with `E exp(C tau) < inf`.
    pub fn mgf_radius(&self) -> f64 {
        match *self {
            Self::Exponential { rate } => rate,
            Self::UniformShifted { .. } => f64::INFINITY,
            Self::Weibull { shape, scale } => {
                if shape > 1.0 {
                    f64::INFINITY
                } else {
                    1.0 / scale
                }
            }
        }
    }
}

/// Mean of a weight distribution.
pub fn distribution_mean(d: &WeightDistribution) -> f64 {
    d.mean()
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// splitmix64 output function; a bijection on `u64`.
#[inline(always)]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeWeightField {
    distribution: WeightDistribution,
    master_seed: u64,
    stream_tag: u64,
    key: u64,
}

impl EdgeWeightField {
    pub fn new(
        distribution: WeightDistribution,
        master_seed: u64,
        stream_tag: u64,
    ) -> Result<Self, WeightError> {
        distribution.validate()?;
        Ok(Self {
            distribution,
            master_seed,
            stream_tag,
            key: Self::derive_key(master_seed, stream_tag),
        })
    }

    fn derive_key(seed: u64, tag: u64) -> u64 {
        mix64(mix64(seed ^ GOLDEN).wrapping_add(tag.wrapping_mul(GOLDEN) ^ 0xD6E8_FEB8_6659_FD93))
    }

    /// The same law and seed on another independent stream.
    pub fn with_stream(&self, stream_tag: u64) -> Self {
        Self {
            stream_tag,
            key: Self::derive_key(self.master_seed, stream_tag),
            ..*self
        }
    }

    pub fn distribution(&self) -> &WeightDistribution {
        &self.distribution
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_tag(&self) -> u64 {
        self.stream_tag
    }

    /// Uniform variate in `(0, 1)` attached to the edge.
    #[inline(always)]
    pub fn uniform(&self, e: EdgeId) -> f64 {
        let axis = match e.axis {
            Axis::Horizontal => 0x5851_F42D_4C95_7F2D,
            Axis::Vertical => 0x1405_7B7E_F767_814F,
        };
        let mut h = mix64(self.key ^ (e.origin.x as u64).wrapping_mul(GOLDEN));
        h = mix64(h ^ (e.origin.y as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F) ^ axis);
        ((h >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    #[inline(always)]
    pub fn weight(&self, e: EdgeId) -> f64 {
        self.distribution.quantile_upper(self.uniform(e))
    }

    /// Weight of the edge joining two neighbouring points.
    pub fn weight_between(&self, a: LatticePoint, b: LatticePoint) -> Option<f64> {
        EdgeId::between(a, b).map(|e| self.weight(e))
    }
}

/// Kolmogorov-Smirnov statistic of `samples` against `cdf`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted.iter().enumerate().fold(0.0f64, |acc, (i, &x)| {
        let f = cdf(x);
        let lo = f - i as f64 / n;
        let hi = (i + 1) as f64 / n - f;
        acc.max(lo).max(hi)
    })
}

/// Asymptotic survival function of the Kolmogorov distribution,
/// `P(K > t) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 t^2)`.
pub fn kolmogorov_survival(t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * t * t).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// Critical value of the one-sample KS statistic at significance `alpha`
/// for `n` samples (asymptotic form, bisection on the survival function).
pub fn ks_critical_value(n: usize, alpha: f64) -> f64 {
    let (mut lo, mut hi) = (0.1f64, 5.0f64);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if kolmogorov_survival(mid) > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi) / (n as f64).sqrt()
}

//! Lattice points, direction frames and the discretization of transverse
//! segments.
//!
//! A [`DirectionFrame`] is a pair of linearly independent unit directions
//! `(theta, theta_t)`. Every vector in the plane has unique oblique
//! coordinates `(pi1, pi2)` in that frame, obtained by solving a 2x2 linear
//! system. Real points map to the lattice through the down-left corner of
//! the unit square that contains them ([`floor_point`]).

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Minimum `|sin(theta_t - theta)|` accepted by [`DirectionFrame::new`].
pub const DEGENERACY_TOLERANCE: f64 = 1e-9;

/// Coordinates within this distance of an integer are snapped before
/// flooring in [`lattice_point_at`].
const SNAP_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("degenerate frame: |sin(theta_t - theta)| = {0:e} is below {DEGENERACY_TOLERANCE:e}")]
    DegenerateFrame(f64),
    #[error("invalid segment: {0}")]
    InvalidSegment(&'static str),
    #[error("non-finite coordinate")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LatticePoint {
    pub x: i64,
    pub y: i64,
}

impl LatticePoint {
    pub const ORIGIN: LatticePoint = LatticePoint { x: 0, y: 0 };

    pub const fn new(x: i64, y: i64) -> Self {
        Self { x, y }
    }

    pub fn l1_distance(self, other: LatticePoint) -> i64 {
        (self.x - other.x).abs() + (self.y - other.y).abs()
    }

    pub fn euclidean_distance(self, other: LatticePoint) -> f64 {
        let dx = (self.x - other.x) as f64;
        let dy = (self.y - other.y) as f64;
        dx.hypot(dy)
    }

    /// The four nearest neighbours, in the fixed order `+x, -x, +y, -y`.
    pub fn neighbors(self) -> [LatticePoint; 4] {
        [
            LatticePoint::new(self.x + 1, self.y),
            LatticePoint::new(self.x - 1, self.y),
            LatticePoint::new(self.x, self.y + 1),
            LatticePoint::new(self.x, self.y - 1),
        ]
    }

    pub fn to_real(self) -> RealPoint {
        RealPoint::new(self.x as f64, self.y as f64)
    }
}

impl fmt::Display for LatticePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

impl From<(i64, i64)> for LatticePoint {
    fn from((x, y): (i64, i64)) -> Self {
        Self { x, y }
    }
}

/// Real points enter lattice queries through the floor map.
impl From<RealPoint> for LatticePoint {
    fn from(p: RealPoint) -> Self {
        floor_point(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RealPoint {
    pub x: f64,
    pub y: f64,
}

impl RealPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl std::ops::Sub for RealPoint {
    type Output = RealPoint;

    fn sub(self, rhs: RealPoint) -> RealPoint {
        RealPoint::new(self.x - rhs.x, self.y - rhs.y)
    }
}

/// Down-left corner of the unit lattice square containing `p`.
pub fn floor_point(p: RealPoint) -> LatticePoint {
    LatticePoint::new(p.x.floor() as i64, p.y.floor() as i64)
}

fn snapped_floor(v: f64) -> i64 {
    let r = v.round();
    if (v - r).abs() <= SNAP_TOLERANCE {
        r as i64
    } else {
        v.floor() as i64
    }
}

/// Lattice representative of `n u_theta + ell u_theta_t`.
///
/// Coordinates that land within `1e-9` of an integer are treated as that
/// integer, so that e.g. `sqrt(2) * u_{pi/4}` maps to `(1, 1)` regardless of
/// rounding in the trigonometric evaluation.
pub fn lattice_point_at(frame: &DirectionFrame, n: f64, ell: f64) -> LatticePoint {
    let p = frame.point_at(n, ell);
    LatticePoint::new(snapped_floor(p.x), snapped_floor(p.y))
}

/// An ordered pair of directions, the second one playing the role of the
/// tangent direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FrameAngles", into = "FrameAngles")]
pub struct DirectionFrame {
    theta: f64,
    theta_t: f64,
    cache: FrameCache,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct FrameAngles {
    theta: f64,
    theta_t: f64,
}

impl TryFrom<FrameAngles> for DirectionFrame {
    type Error = GeometryError;

    fn try_from(a: FrameAngles) -> Result<Self, Self::Error> {
        DirectionFrame::new(a.theta, a.theta_t)
    }
}

impl From<DirectionFrame> for FrameAngles {
    fn from(f: DirectionFrame) -> Self {
        FrameAngles {
            theta: f.theta,
            theta_t: f.theta_t,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct FrameCache {
    cos: f64,
    sin: f64,
    cos_t: f64,
    sin_t: f64,
    det: f64,
}

impl DirectionFrame {
    pub fn new(theta: f64, theta_t: f64) -> Result<Self, GeometryError> {
        if !theta.is_finite() || !theta_t.is_finite() {
            return Err(GeometryError::NonFinite);
        }
        let (sin, cos) = theta.sin_cos();
        let (sin_t, cos_t) = theta_t.sin_cos();
        let det = cos * sin_t - sin * cos_t;
        if det.abs() <= DEGENERACY_TOLERANCE {
            return Err(GeometryError::DegenerateFrame(det.abs()));
        }
        Ok(Self {
            theta,
            theta_t,
            cache: FrameCache {
                cos,
                sin,
                cos_t,
                sin_t,
                det,
            },
        })
    }

    /// `theta = pi/4`, tangent `3pi/4`. Exact by the lattice symmetry of the
    /// limit shape.
    pub fn diagonal() -> Self {
        Self::new(FRAC_PI_4, 3.0 * FRAC_PI_4).expect("diagonal frame is non-degenerate")
    }

    /// `theta = 0`, tangent `pi/2`.
    pub fn axis() -> Self {
        Self::new(0.0, FRAC_PI_2).expect("axis frame is non-degenerate")
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn theta_t(&self) -> f64 {
        self.theta_t
    }

    pub fn unit(&self) -> RealPoint {
        RealPoint::new(self.cache.cos, self.cache.sin)
    }

    pub fn unit_t(&self) -> RealPoint {
        RealPoint::new(self.cache.cos_t, self.cache.sin_t)
    }

    /// Oblique coordinates `(pi1, pi2)` with `v = pi1 u_theta + pi2 u_theta_t`.
    pub fn project(&self, v: RealPoint) -> (f64, f64) {
        let c = &self.cache;
        let pi1 = (c.sin_t * v.x - c.cos_t * v.y) / c.det;
        let pi2 = (c.cos * v.y - c.sin * v.x) / c.det;
        (pi1, pi2)
    }

    pub fn project_lattice(&self, v: LatticePoint) -> (f64, f64) {
        self.project(v.to_real())
    }

    /// `n u_theta + ell u_theta_t`.
    pub fn point_at(&self, n: f64, ell: f64) -> RealPoint {
        let c = &self.cache;
        RealPoint::new(n * c.cos + ell * c.cos_t, n * c.sin + ell * c.sin_t)
    }

    /// The same frame with the tangent reversed.
    pub fn flipped_tangent(&self) -> Self {
        Self::new(self.theta, self.theta_t + std::f64::consts::PI)
            .expect("flipping the tangent keeps the frame non-degenerate")
    }
}

/// `{x : pi1(x) = n, offset <= pi2(x) <= offset + length}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransverseSegment {
    pub frame: DirectionFrame,
    pub n: f64,
    pub length: f64,
    pub offset: f64,
}

impl TransverseSegment {
    pub fn new(
        frame: DirectionFrame,
        n: f64,
        length: f64,
        offset: f64,
    ) -> Result<Self, GeometryError> {
        if !(n.is_finite() && length.is_finite() && offset.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        if length <= 0.0 {
            return Err(GeometryError::InvalidSegment("length must be positive"));
        }
        Ok(Self {
            frame,
            n,
            length,
            offset,
        })
    }

    pub fn start(&self) -> RealPoint {
        self.frame.point_at(self.n, self.offset)
    }

    pub fn end(&self) -> RealPoint {
        self.frame.point_at(self.n, self.offset + self.length)
    }

    /// Floor images of the points at unit Euclidean spacing along the
    /// segment, plus the far endpoint, deduplicated in order of increasing
    /// `pi2`.
    ///
    /// A segment shorter than one unit whose endpoints share a cell yields
    /// that single point.
    pub fn lattice_points(&self) -> Vec<LatticePoint> {
        let steps = self.length.floor() as usize;
        let mut out: Vec<LatticePoint> = Vec::with_capacity(steps + 2);
        let mut push = |p: LatticePoint| {
            if !out.contains(&p) {
                out.push(p);
            }
        };
        for i in 0..=steps {
            push(lattice_point_at(
                &self.frame,
                self.n,
                self.offset + i as f64,
            ));
        }
        push(lattice_point_at(
            &self.frame,
            self.n,
            self.offset + self.length,
        ));
        out
    }
}

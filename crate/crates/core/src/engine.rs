//! Exact shortest paths on the weighted lattice.
//!
//! All searches run Dijkstra with lazy deletion over a finite [`Window`].
//! Vertices are addressed by window-local indices laid out row-major with
//! `x` as the row coordinate, so index order coincides with the
//! lexicographic order of lattice points. Ties between equal tentative
//! distances go to the lexicographically smaller parent, which makes parent
//! trees a deterministic function of the weights.
//!
//! Policy-driven queries ([`passage_time`], [`source_tree_covering`]) start
//! from an inflated bounding box and grow the window until no returned
//! geodesic touches its boundary.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{DirectionFrame, LatticePoint, DEGENERACY_TOLERANCE};
use crate::weights::{EdgeId, EdgeWeightField};

/// Two target distances closer than this are reported as a tie.
pub const CONTACT_TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("geodesic still touches the window boundary after {expansions} expansions")]
    WindowExhausted { expansions: u32 },
    #[error("no admissible path inside the window")]
    Unreachable,
    #[error("targets {first} and {second} are both hit at time {tau}")]
    MultipleContacts {
        first: LatticePoint,
        second: LatticePoint,
        tau: f64,
    },
    #[error("h-ball is not bounded inside a window of radius {radius}")]
    SurrogateTooFlat { radius: i64 },
    #[error("geodesic never reaches pi1 = {k}")]
    NoCrossing { k: f64 },
    #[error("geodesic endpoints have zero separation along theta")]
    DegenerateChord,
    #[error("resampling stream {0} equals the field's own stream")]
    StreamCollision(u64),
    #[error("point {0} lies outside the window")]
    OutsideWindow(LatticePoint),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Anything that assigns a nonnegative weight to every edge.
pub trait EdgeWeights: Sync {
    fn weight(&self, e: EdgeId) -> f64;
}

impl EdgeWeights for EdgeWeightField {
    #[inline(always)]
    fn weight(&self, e: EdgeId) -> f64 {
        EdgeWeightField::weight(self, e)
    }
}

impl<W: EdgeWeights + ?Sized> EdgeWeights for &W {
    #[inline(always)]
    fn weight(&self, e: EdgeId) -> f64 {
        (**self).weight(e)
    }
}

/// Original weights except on edges selected by `predicate`, which read
/// from an independent stream.
pub struct Resampled<'a, P> {
    base: &'a EdgeWeightField,
    alt: EdgeWeightField,
    predicate: P,
}

impl<'a, P: Fn(EdgeId) -> bool + Sync> Resampled<'a, P> {
    pub fn new(
        base: &'a EdgeWeightField,
        alt_stream: u64,
        predicate: P,
    ) -> Result<Self, EngineError> {
        if alt_stream == base.stream_tag() {
            return Err(EngineError::StreamCollision(alt_stream));
        }
        Ok(Self {
            base,
            alt: base.with_stream(alt_stream),
            predicate,
        })
    }
}

impl<P: Fn(EdgeId) -> bool + Sync> EdgeWeights for Resampled<'_, P> {
    #[inline(always)]
    fn weight(&self, e: EdgeId) -> f64 {
        if (self.predicate)(e) {
            self.alt.weight(e)
        } else {
            self.base.weight(e)
        }
    }
}

/// Closed axis-aligned box of lattice vertices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Window {
    pub min: LatticePoint,
    pub max: LatticePoint,
}

impl Window {
    pub fn new(min: LatticePoint, max: LatticePoint) -> Result<Self, EngineError> {
        if min.x > max.x || min.y > max.y {
            return Err(EngineError::InvalidArgument(format!(
                "window corners {min} > {max}"
            )));
        }
        Ok(Self { min, max })
    }

    /// Bounding box of `points` grown by `margin` on every side.
    pub fn around(points: &[LatticePoint], margin: i64) -> Self {
        let mut min = points[0];
        let mut max = points[0];
        for p in points {
            min.x = min.x.min(p.x);
            min.y = min.y.min(p.y);
            max.x = max.x.max(p.x);
            max.y = max.y.max(p.y);
        }
        Self {
            min: LatticePoint::new(min.x - margin, min.y - margin),
            max: LatticePoint::new(max.x + margin, max.y + margin),
        }
    }

    pub fn width(&self) -> usize {
        (self.max.x - self.min.x + 1) as usize
    }

    pub fn height(&self) -> usize {
        (self.max.y - self.min.y + 1) as usize
    }

    pub fn area(&self) -> usize {
        self.width() * self.height()
    }

    pub fn contains(&self, p: LatticePoint) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn on_boundary(&self, p: LatticePoint) -> bool {
        p.x == self.min.x || p.x == self.max.x || p.y == self.min.y || p.y == self.max.y
    }

    #[inline(always)]
    pub fn index(&self, p: LatticePoint) -> usize {
        (p.x - self.min.x) as usize * self.height() + (p.y - self.min.y) as usize
    }

    #[inline(always)]
    pub fn point(&self, idx: usize) -> LatticePoint {
        let h = self.height();
        LatticePoint::new(self.min.x + (idx / h) as i64, self.min.y + (idx % h) as i64)
    }

    pub fn points(&self) -> impl Iterator<Item = LatticePoint> + '_ {
        (0..self.area()).map(|i| self.point(i))
    }

    pub fn grown(&self, margin: i64) -> Self {
        Self {
            min: LatticePoint::new(self.min.x - margin, self.min.y - margin),
            max: LatticePoint::new(self.max.x + margin, self.max.y + margin),
        }
    }
}

/// How windows are sized and grown for exactness certificates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowPolicy {
    /// Initial margin as a multiple of the largest source-target distance.
    pub inflation: f64,
    /// Multiplier applied to the margin on every expansion.
    pub growth: f64,
    pub max_expansions: u32,
}

impl Default for WindowPolicy {
    fn default() -> Self {
        Self {
            inflation: 1.0,
            growth: 1.5,
            max_expansions: 8,
        }
    }
}

impl WindowPolicy {
    pub fn validate(&self) -> Result<(), EngineError> {
        if !(self.inflation.is_finite() && self.inflation > 0.0) {
            return Err(EngineError::InvalidArgument(
                "inflation must be positive".into(),
            ));
        }
        if !(self.growth.is_finite() && self.growth > 1.0) {
            return Err(EngineError::InvalidArgument("growth must exceed 1".into()));
        }
        Ok(())
    }

    pub fn initial_margin(&self, src: LatticePoint, targets: &[LatticePoint]) -> i64 {
        let reach = targets
            .iter()
            .map(|t| src.euclidean_distance(*t))
            .fold(0.0, f64::max);
        ((self.inflation * reach).ceil() as i64).max(2)
    }

    pub fn next_margin(&self, margin: i64) -> i64 {
        ((margin as f64 * self.growth).ceil() as i64).max(margin + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeodesicResult {
    pub time: f64,
    pub path: Vec<LatticePoint>,
    pub touched_boundary: bool,
    pub window_used: Window,
    pub expansions: u32,
}

impl GeodesicResult {
    pub fn source(&self) -> LatticePoint {
        self.path[0]
    }

    pub fn target(&self) -> LatticePoint {
        *self.path.last().expect("geodesic paths are nonempty")
    }
}

#[derive(Clone, Copy)]
struct HeapEntry {
    dist: f64,
    idx: u32,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for HeapEntry {}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapEntry {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.idx.cmp(&self.idx))
    }
}

const NO_PARENT: u32 = u32::MAX;

struct Search<'w, W, A> {
    window: Window,
    weights: &'w W,
    admissible: A,
    dist: Vec<f64>,
    parent: Vec<u32>,
    settled: Vec<bool>,
    heap: BinaryHeap<HeapEntry>,
}

impl<'w, W: EdgeWeights, A: Fn(LatticePoint) -> bool> Search<'w, W, A> {
    fn new(weights: &'w W, window: Window, admissible: A, src: LatticePoint) -> Self {
        let area = window.area();
        assert!(
            area < NO_PARENT as usize,
            "window too large for 32-bit vertex indices"
        );
        let mut s = Self {
            window,
            weights,
            admissible,
            dist: vec![f64::INFINITY; area],
            parent: vec![NO_PARENT; area],
            settled: vec![false; area],
            heap: BinaryHeap::new(),
        };
        let si = window.index(src);
        s.dist[si] = 0.0;
        s.heap.push(HeapEntry {
            dist: 0.0,
            idx: si as u32,
        });
        s
    }

    /// Settle the next vertex; returns its index and final distance.
    fn step(&mut self) -> Option<(usize, f64)> {
        while let Some(HeapEntry { dist, idx }) = self.heap.pop() {
            let u = idx as usize;
            if self.settled[u] || dist > self.dist[u] {
                continue;
            }
            self.settled[u] = true;
            let up = self.window.point(u);
            for v in up.neighbors() {
                if !self.window.contains(v) {
                    continue;
                }
                let vi = self.window.index(v);
                if self.settled[vi] || !(self.admissible)(v) {
                    continue;
                }
                let e = EdgeId::between(up, v).expect("neighbours share an edge");
                let nd = dist + self.weights.weight(e);
                let cur = self.dist[vi];
                if nd < cur || (nd == cur && (u as u32) < self.parent[vi]) {
                    self.dist[vi] = nd;
                    self.parent[vi] = u as u32;
                    self.heap.push(HeapEntry {
                        dist: nd,
                        idx: vi as u32,
                    });
                }
            }
            return Some((u, dist));
        }
        None
    }

    fn peek_dist(&mut self) -> Option<f64> {
        while let Some(top) = self.heap.peek() {
            let u = top.idx as usize;
            if self.settled[u] || top.dist > self.dist[u] {
                self.heap.pop();
            } else {
                return Some(top.dist);
            }
        }
        None
    }

    fn path_to(&self, idx: usize) -> Vec<LatticePoint> {
        let mut out = vec![self.window.point(idx)];
        let mut cur = idx;
        while self.parent[cur] != NO_PARENT {
            cur = self.parent[cur] as usize;
            out.push(self.window.point(cur));
        }
        out.reverse();
        out
    }

    fn into_tree(mut self, source: LatticePoint) -> SourceTree {
        for (d, s) in self.dist.iter_mut().zip(&self.settled) {
            if !s {
                *d = f64::INFINITY;
            }
        }
        for (p, s) in self.parent.iter_mut().zip(&self.settled) {
            if !s {
                *p = NO_PARENT;
            }
        }
        SourceTree {
            source,
            window: self.window,
            dist: self.dist,
            parent: self.parent,
        }
    }
}

fn ensure_inside(window: &Window, p: LatticePoint) -> Result<(), EngineError> {
    if window.contains(p) {
        Ok(())
    } else {
        Err(EngineError::OutsideWindow(p))
    }
}

fn search_pair<W: EdgeWeights, A: Fn(LatticePoint) -> bool>(
    weights: &W,
    src: LatticePoint,
    dst: LatticePoint,
    window: Window,
    admissible: A,
) -> Result<GeodesicResult, EngineError> {
    ensure_inside(&window, src)?;
    ensure_inside(&window, dst)?;
    // searching from the smaller endpoint makes T(u, v) = T(v, u) bit for bit
    let reversed = dst < src;
    let (from, to) = if reversed { (dst, src) } else { (src, dst) };
    let mut search = Search::new(weights, window, admissible, from);
    let target = window.index(to);
    while let Some((u, d)) = search.step() {
        if u == target {
            let mut path = search.path_to(u);
            if reversed {
                path.reverse();
            }
            let touched_boundary = path.iter().any(|p| window.on_boundary(*p));
            return Ok(GeodesicResult {
                time: d,
                path,
                touched_boundary,
                window_used: window,
                expansions: 0,
            });
        }
    }
    Err(EngineError::Unreachable)
}

/// Passage time and geodesic inside a fixed window, with no expansion.
///
/// `touched_boundary` reports whether the returned geodesic visits the
/// window's outer ring.
pub fn passage_time_in<W: EdgeWeights>(
    weights: &W,
    src: impl Into<LatticePoint>,
    dst: impl Into<LatticePoint>,
    window: &Window,
) -> Result<GeodesicResult, EngineError> {
    search_pair(weights, src.into(), dst.into(), *window, |_| true)
}

/// Passage time `T(src, dst)` with its geodesic, growing the window under
/// `policy` until the geodesic stays off the boundary.
///
/// Real-valued endpoints are floored to the lattice.
pub fn passage_time<W: EdgeWeights>(
    weights: &W,
    src: impl Into<LatticePoint>,
    dst: impl Into<LatticePoint>,
    policy: &WindowPolicy,
) -> Result<GeodesicResult, EngineError> {
    let (src, dst) = (src.into(), dst.into());
    with_policy(src, &[dst], policy, |window| {
        search_pair(weights, src, dst, window, |_| true)
    })
}

fn with_policy(
    src: LatticePoint,
    targets: &[LatticePoint],
    policy: &WindowPolicy,
    mut query: impl FnMut(Window) -> Result<GeodesicResult, EngineError>,
) -> Result<GeodesicResult, EngineError> {
    if targets.iter().all(|t| *t == src) {
        return Ok(GeodesicResult {
            time: 0.0,
            path: vec![src],
            touched_boundary: false,
            window_used: Window::around(&[src], 0),
            expansions: 0,
        });
    }
    let mut pts = vec![src];
    pts.extend_from_slice(targets);
    let mut margin = policy.initial_margin(src, targets);
    let mut expansions = 0;
    loop {
        let mut res = query(Window::around(&pts, margin))?;
        res.expansions = expansions;
        if !res.touched_boundary {
            return Ok(res);
        }
        if expansions >= policy.max_expansions {
            return Err(EngineError::WindowExhausted { expansions });
        }
        expansions += 1;
        margin = policy.next_margin(margin);
    }
}

/// Passage time where edges selected by `resample` draw fresh weights from
/// stream `alt_stream`; all other edges keep their original weights.
pub fn resample_passage_time<P: Fn(EdgeId) -> bool + Sync>(
    field: &EdgeWeightField,
    src: impl Into<LatticePoint>,
    dst: impl Into<LatticePoint>,
    resample: P,
    alt_stream: u64,
    policy: &WindowPolicy,
) -> Result<GeodesicResult, EngineError> {
    let weights = Resampled::new(field, alt_stream, resample)?;
    passage_time(&weights, src, dst, policy)
}

/// Minimum passage time over paths whose vertices all satisfy `region`.
pub fn restricted_passage_time<W: EdgeWeights>(
    weights: &W,
    src: impl Into<LatticePoint>,
    dst: impl Into<LatticePoint>,
    region: impl Fn(LatticePoint) -> bool,
    window: &Window,
) -> Result<GeodesicResult, EngineError> {
    let (src, dst) = (src.into(), dst.into());
    if !region(src) || !region(dst) {
        return Err(EngineError::InvalidArgument(
            "endpoints must satisfy the region predicate".into(),
        ));
    }
    search_pair(weights, src, dst, *window, region)
}

/// Single-source Dijkstra tree over a window.
///
/// Distances of vertices that were never settled (unreachable, or beyond an
/// early stop) are `+inf`.
#[derive(Debug, Clone)]
pub struct SourceTree {
    source: LatticePoint,
    window: Window,
    dist: Vec<f64>,
    parent: Vec<u32>,
}

impl SourceTree {
    pub fn source(&self) -> LatticePoint {
        self.source
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn dist(&self, p: LatticePoint) -> Option<f64> {
        if !self.window.contains(p) {
            return None;
        }
        let d = self.dist[self.window.index(p)];
        d.is_finite().then_some(d)
    }

    pub fn parent(&self, p: LatticePoint) -> Option<LatticePoint> {
        if !self.window.contains(p) {
            return None;
        }
        let pi = self.parent[self.window.index(p)];
        (pi != NO_PARENT).then(|| self.window.point(pi as usize))
    }

    pub fn path_to(&self, p: LatticePoint) -> Option<Vec<LatticePoint>> {
        self.dist(p)?;
        let mut out = vec![p];
        let mut cur = p;
        while let Some(q) = self.parent(cur) {
            out.push(q);
            cur = q;
        }
        out.reverse();
        Some(out)
    }

    pub fn geodesic(&self, p: LatticePoint) -> Option<GeodesicResult> {
        let time = self.dist(p)?;
        let path = self.path_to(p)?;
        let touched_boundary = path.iter().any(|q| self.window.on_boundary(*q));
        Some(GeodesicResult {
            time,
            path,
            touched_boundary,
            window_used: self.window,
            expansions: 0,
        })
    }

    /// `{x in window : dist(x) <= t}`.
    pub fn wet_region(&self, t: f64) -> BTreeSet<LatticePoint> {
        self.dist
            .iter()
            .enumerate()
            .filter(|(_, d)| **d <= t)
            .map(|(i, _)| self.window.point(i))
            .collect()
    }

    /// Largest Bellman residual `dist(v) - min(dist(v), dist(u) + w(u, v))`
    /// over in-window edges between settled vertices.
    pub fn bellman_residual<W: EdgeWeights>(&self, weights: &W) -> f64 {
        let mut worst = 0.0f64;
        for u in self.window.points() {
            let Some(du) = self.dist(u) else { continue };
            for v in u.neighbors() {
                let Some(dv) = self.dist(v) else { continue };
                let w = weights.weight(EdgeId::between(u, v).unwrap());
                worst = worst.max(dv - dv.min(du + w));
            }
        }
        worst
    }
}

/// Full single-source tree over `window`.
pub fn source_tree<W: EdgeWeights>(
    weights: &W,
    src: impl Into<LatticePoint>,
    window: &Window,
) -> Result<SourceTree, EngineError> {
    let src = src.into();
    ensure_inside(window, src)?;
    let mut search = Search::new(weights, *window, |_| true, src);
    while search.step().is_some() {}
    Ok(search.into_tree(src))
}

/// Single-source tree that stops once every target is settled.
pub fn source_tree_to<W: EdgeWeights>(
    weights: &W,
    src: impl Into<LatticePoint>,
    targets: &[LatticePoint],
    window: &Window,
) -> Result<SourceTree, EngineError> {
    let src = src.into();
    ensure_inside(window, src)?;
    for t in targets {
        ensure_inside(window, *t)?;
    }
    let mut pending: BTreeSet<usize> = targets.iter().map(|t| window.index(*t)).collect();
    let mut search = Search::new(weights, *window, |_| true, src);
    while !pending.is_empty() {
        match search.step() {
            Some((u, _)) => {
                pending.remove(&u);
            }
            None => return Err(EngineError::Unreachable),
        }
    }
    Ok(search.into_tree(src))
}

/// Tree from `src` reaching every target, grown under `policy` until no
/// geodesic to a target touches the window boundary.
pub fn source_tree_covering<W: EdgeWeights>(
    weights: &W,
    src: impl Into<LatticePoint>,
    targets: &[LatticePoint],
    policy: &WindowPolicy,
) -> Result<(SourceTree, u32), EngineError> {
    let src = src.into();
    let mut pts = vec![src];
    pts.extend_from_slice(targets);
    let mut margin = policy.initial_margin(src, targets);
    let mut expansions = 0;
    loop {
        let tree = source_tree_to(weights, src, targets, &Window::around(&pts, margin))?;
        let touched = targets.iter().any(|t| {
            tree.path_to(*t)
                .map(|p| p.iter().any(|q| tree.window.on_boundary(*q)))
                .unwrap_or(true)
        });
        if !touched {
            return Ok((tree, expansions));
        }
        if expansions >= policy.max_expansions {
            return Err(EngineError::WindowExhausted { expansions });
        }
        expansions += 1;
        margin = policy.next_margin(margin);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HittingTime {
    pub tau: f64,
    pub contact: LatticePoint,
    /// The wet region at time `tau`.
    pub frozen: BTreeSet<LatticePoint>,
}

/// First time the wet region from `src` reaches `targets`, the unique
/// contact point and the wet region frozen at that time.
pub fn hitting_time<W: EdgeWeights>(
    weights: &W,
    src: impl Into<LatticePoint>,
    targets: &BTreeSet<LatticePoint>,
    window: &Window,
) -> Result<HittingTime, EngineError> {
    let src = src.into();
    ensure_inside(window, src)?;
    if targets.is_empty() {
        return Err(EngineError::InvalidArgument("empty target set".into()));
    }
    if targets.contains(&src) {
        return Err(EngineError::InvalidArgument(
            "source lies in the target set".into(),
        ));
    }
    let mask: Vec<bool> = {
        let mut m = vec![false; window.area()];
        let mut any = false;
        for t in targets.iter().filter(|t| window.contains(**t)) {
            m[window.index(*t)] = true;
            any = true;
        }
        if !any {
            return Err(EngineError::InvalidArgument(
                "target set misses the window".into(),
            ));
        }
        m
    };
    let mut search = Search::new(weights, *window, |_| true, src);
    let mut order = Vec::new();
    let (contact, tau) = loop {
        let (u, d) = search.step().ok_or(EngineError::Unreachable)?;
        order.push(u);
        if mask[u] {
            break (u, d);
        }
    };
    while let Some(next) = search.peek_dist() {
        if next > tau + CONTACT_TIE_TOLERANCE {
            break;
        }
        let (u, d) = search.step().expect("peeked entry exists");
        if mask[u] {
            return Err(EngineError::MultipleContacts {
                first: window.point(contact),
                second: window.point(u),
                tau,
            });
        }
        if d <= tau {
            order.push(u);
        }
    }
    Ok(HittingTime {
        tau,
        contact: window.point(contact),
        frozen: order.into_iter().map(|i| window.point(i)).collect(),
    })
}

/// Vertex set `H = {x : h(x - a) <= h*}` and its vertex boundary, where
/// `h*` is the largest value of `h` over the Euclidean ball of radius `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct HBall {
    pub center: LatticePoint,
    pub h_star: f64,
    pub members: BTreeSet<LatticePoint>,
    pub boundary: BTreeSet<LatticePoint>,
}

/// Default containment factor: the h-ball is searched for inside a square of
/// half-width `ceil(4k)`.
pub const HBALL_CONTAINMENT: f64 = 4.0;

/// Builds the h-ball around `center` for a surrogate `h` of the expected
/// passage time, evaluated at lattice displacements.
pub fn h_ball_boundary(
    h: impl Fn(LatticePoint) -> f64,
    center: impl Into<LatticePoint>,
    k: f64,
    containment: f64,
) -> Result<HBall, EngineError> {
    let a = center.into();
    if !(k.is_finite() && k >= 2.0) {
        return Err(EngineError::InvalidArgument(format!(
            "k = {k} must be at least 2"
        )));
    }
    let kr = k.ceil() as i64;
    let mut h_star = f64::NEG_INFINITY;
    for dx in -kr..=kr {
        for dy in -kr..=kr {
            if ((dx * dx + dy * dy) as f64) <= k * k {
                h_star = h_star.max(h(LatticePoint::new(dx, dy)));
            }
        }
    }
    let radius = (containment * k).ceil() as i64;
    let inside = |dx: i64, dy: i64| h(LatticePoint::new(dx, dy)) <= h_star;
    let mut members = BTreeSet::new();
    let mut boundary = BTreeSet::new();
    for dx in -radius..=radius {
        for dy in -radius..=radius {
            if !inside(dx, dy) {
                continue;
            }
            if dx.abs() == radius || dy.abs() == radius {
                return Err(EngineError::SurrogateTooFlat { radius });
            }
            let p = LatticePoint::new(a.x + dx, a.y + dy);
            members.insert(p);
            let edge = [(1, 0), (-1, 0), (0, 1), (0, -1)]
                .iter()
                .any(|(ox, oy)| !inside(dx + ox, dy + oy));
            if edge {
                boundary.insert(p);
            }
        }
    }
    Ok(HBall {
        center: a,
        h_star,
        members,
        boundary,
    })
}

/// Norm-like surrogate for `h(x) = E T(0, x)`: `|x|` times a rate that is
/// interpolated in angle between the axis and diagonal directions and
/// extended by the dihedral symmetry of the lattice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum HSurrogate {
    Euclidean,
    AngularNorm { axis_rate: f64, diagonal_rate: f64 },
}

impl HSurrogate {
    pub fn eval(&self, v: LatticePoint) -> f64 {
        let (x, y) = (v.x.abs() as f64, v.y.abs() as f64);
        let r = x.hypot(y);
        match *self {
            HSurrogate::Euclidean => r,
            HSurrogate::AngularNorm {
                axis_rate,
                diagonal_rate,
            } => {
                if r == 0.0 {
                    return 0.0;
                }
                let (lo, hi) = if x >= y { (y, x) } else { (x, y) };
                let phi = lo.atan2(hi);
                let t = phi / std::f64::consts::FRAC_PI_4;
                r * (axis_rate + t * (diagonal_rate - axis_rate))
            }
        }
    }
}

/// Maximum transversal displacement of the geodesic polyline from its chord
/// where it crosses `pi1(w - u) = k`, with `u`, `v` the path endpoints.
pub fn wandering(
    path: &[LatticePoint],
    frame: &DirectionFrame,
    k: f64,
) -> Result<f64, EngineError> {
    let (Some(&u), Some(&v)) = (path.first(), path.last()) else {
        return Err(EngineError::InvalidArgument("empty path".into()));
    };
    let rel = |p: LatticePoint| frame.project_lattice(LatticePoint::new(p.x - u.x, p.y - u.y));
    let (c1, c2) = rel(v);
    if c1.abs() <= DEGENERACY_TOLERANCE * (c1.hypot(c2)).max(1.0) {
        return Err(EngineError::DegenerateChord);
    }
    let slope = c2 / c1;
    let offset = |pi2: f64| (pi2 - k * slope).abs();
    let mut best: Option<f64> = None;
    let mut take = |val: f64| best = Some(best.map_or(val, |b: f64| b.max(val)));
    let coords: Vec<(f64, f64)> = path.iter().map(|p| rel(*p)).collect();
    if coords.len() == 1 && coords[0].0 == k {
        take(offset(coords[0].1));
    }
    for w in coords.windows(2) {
        let ((a1, a2), (b1, b2)) = (w[0], w[1]);
        if a1 == b1 {
            if a1 == k {
                take(offset(a2));
                take(offset(b2));
            }
            continue;
        }
        let t = (k - a1) / (b1 - a1);
        if (0.0..=1.0).contains(&t) {
            take(offset(a2 + t * (b2 - a2)));
        }
    }
    best.ok_or(EngineError::NoCrossing { k })
}

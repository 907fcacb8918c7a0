//! Exhaustive path enumeration shared by the oracle and acceptance targets.
#![allow(dead_code)]

use std::collections::BTreeSet;

use fpp_lab::engine::EdgeWeights;
use fpp_lab::{EdgeId, LatticePoint, WeightDistribution, Window};

pub fn p(x: i64, y: i64) -> LatticePoint {
    LatticePoint::new(x, y)
}

pub fn distributions() -> [WeightDistribution; 3] {
    [
        WeightDistribution::exponential(1.0).unwrap(),
        WeightDistribution::uniform(0.5, 1.5).unwrap(),
        WeightDistribution::weibull(1.5, 1.0).unwrap(),
    ]
}

pub fn w<W: EdgeWeights>(f: &W, a: LatticePoint, b: LatticePoint) -> f64 {
    f.weight(EdgeId::between(a, b).unwrap())
}

pub fn path_weight<W: EdgeWeights>(f: &W, path: &[LatticePoint]) -> f64 {
    path.windows(2).map(|s| w(f, s[0], s[1])).sum()
}

/// Minimum weight of every self-avoiding path from `src` inside `window`
/// whose vertices satisfy `ok`, by depth-first enumeration. Branches whose
/// partial weight already exceeds the best known weight to `bound_target`
/// are cut.
struct Enumerator<'a, W, F> {
    f: &'a W,
    window: Window,
    ok: F,
    best: Vec<f64>,
    on_path: Vec<bool>,
    bound_target: Option<usize>,
}

impl<W: EdgeWeights, F: Fn(LatticePoint) -> bool> Enumerator<'_, W, F> {
    fn dfs(&mut self, u: LatticePoint, acc: f64) {
        let ui = self.window.index(u);
        if acc < self.best[ui] {
            self.best[ui] = acc;
        }
        if let Some(t) = self.bound_target {
            if acc >= self.best[t] {
                return;
            }
        }
        self.on_path[ui] = true;
        for v in u.neighbors() {
            if self.window.contains(v) && (self.ok)(v) && !self.on_path[self.window.index(v)] {
                self.dfs(v, acc + w(self.f, u, v));
            }
        }
        self.on_path[ui] = false;
    }
}

pub fn exhaustive<W: EdgeWeights>(
    f: &W,
    window: Window,
    src: LatticePoint,
    ok: impl Fn(LatticePoint) -> bool,
    bound: Option<LatticePoint>,
) -> Vec<f64> {
    let mut e = Enumerator {
        f,
        window,
        ok,
        best: vec![f64::INFINITY; window.area()],
        on_path: vec![false; window.area()],
        bound_target: bound.map(|b| window.index(b)),
    };
    e.dfs(src, 0.0);
    e.best
}

pub fn assert_valid_path(
    path: &[LatticePoint],
    src: LatticePoint,
    dst: LatticePoint,
    window: &Window,
) {
    assert_eq!(path[0], src);
    assert_eq!(*path.last().unwrap(), dst);
    assert!(path.windows(2).all(|s| s[0].l1_distance(s[1]) == 1));
    assert!(path.iter().all(|q| window.contains(*q)));
    let distinct: BTreeSet<_> = path.iter().collect();
    assert_eq!(distinct.len(), path.len(), "path revisits a vertex");
}

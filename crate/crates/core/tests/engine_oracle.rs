//! Engine results against exhaustive path enumeration and metric identities.

mod common;

use std::collections::BTreeSet;

use common::*;

use fpp_lab::engine::{
    hitting_time, passage_time_in, resample_passage_time, restricted_passage_time, source_tree,
    EngineError,
};
use fpp_lab::geometry::DirectionFrame;
use fpp_lab::{
    passage_time, EdgeId, EdgeWeightField, LatticePoint, WeightDistribution, Window, WindowPolicy,
};

#[test]
fn all_small_windows_match_exhaustive_paths() {
    let start = std::time::Instant::now();
    for dist in distributions() {
        for width in 1..=4 {
            for height in 1..=4 {
                let window = Window::new(p(0, 0), p(width - 1, height - 1)).unwrap();
                for seed in 0..100u64 {
                    let f = EdgeWeightField::new(dist, seed * 31 + (width * 4 + height) as u64, 0)
                        .unwrap();
                    for src in window.points() {
                        let best = exhaustive(&f, window, src, |_| true, None);
                        for dst in window.points() {
                            let r = passage_time_in(&f, src, dst, &window).unwrap();
                            let want = best[window.index(dst)];
                            assert!(
                                (r.time - want).abs() <= 1e-12,
                                "{dist:?} {width}x{height} seed {seed} {src:?}->{dst:?}"
                            );
                            assert_valid_path(&r.path, src, dst, &window);
                            assert!((path_weight(&f, &r.path) - r.time).abs() <= 1e-12);
                        }
                    }
                }
            }
        }
    }
    assert!(start.elapsed().as_secs() < 60);
}

#[test]
fn three_by_three_example() {
    let f = EdgeWeightField::new(WeightDistribution::exponential(1.0).unwrap(), 2024, 0).unwrap();
    let window = Window::new(p(0, 0), p(2, 2)).unwrap();
    let best = exhaustive(&f, window, p(0, 0), |_| true, None);
    let r = passage_time_in(&f, p(0, 0), p(2, 2), &window).unwrap();
    assert!((r.time - best[window.index(p(2, 2))]).abs() <= 1e-12);

    let tree = source_tree(&f, p(1, 1), &window).unwrap();
    assert_eq!(tree.dist(p(1, 1)), Some(0.0));
    for x in window.points() {
        let pair = passage_time_in(&f, p(1, 1), x, &window).unwrap();
        assert!((tree.dist(x).unwrap() - pair.time).abs() <= 1e-12);
        if let Some(par) = tree.parent(x) {
            assert_eq!(
                tree.dist(x).unwrap(),
                tree.dist(par).unwrap() + w(&f, par, x)
            );
        }
    }
    assert_eq!(tree.bellman_residual(&f), 0.0);
}

#[test]
fn strip_restriction_matches_exhaustive_paths() {
    let window = Window::new(p(-1, -2), p(6, 2)).unwrap();
    assert_eq!((window.width(), window.height()), (8, 5));
    for dist in distributions() {
        for seed in 0..10u64 {
            let f = EdgeWeightField::new(dist, 500 + seed, 0).unwrap();
            for halfwidth in [2, 1] {
                let strip = move |q: LatticePoint| q.y.abs() <= halfwidth;
                let r = restricted_passage_time(&f, p(0, 0), p(6, 0), strip, &window).unwrap();
                let best = exhaustive(&f, window, p(0, 0), strip, Some(p(6, 0)));
                assert!(
                    (r.time - best[window.index(p(6, 0))]).abs() <= 1e-12,
                    "seed {seed} |y| <= {halfwidth}"
                );
                assert!(r.path.iter().all(|q| strip(*q)));
                let free = passage_time_in(&f, p(0, 0), p(6, 0), &window).unwrap();
                assert!(r.time >= free.time);
            }
        }
    }
    let f = EdgeWeightField::new(distributions()[0], 1, 0).unwrap();
    let fenced = |q: LatticePoint| q.l1_distance(p(6, 0)) != 1;
    assert_eq!(
        restricted_passage_time(&f, p(0, 0), p(6, 0), fenced, &window).unwrap_err(),
        EngineError::Unreachable
    );
}

#[test]
fn metric_axioms_on_a_30_by_30_window() {
    let window = Window::new(p(0, 0), p(29, 29)).unwrap();
    let f = EdgeWeightField::new(WeightDistribution::exponential(1.0).unwrap(), 77, 0).unwrap();
    let mut state = 0x1234_5678u64;
    let mut next = || {
        state = fpp_lab::weights::mix64(state);
        p((state % 30) as i64, ((state >> 32) % 30) as i64)
    };
    for _ in 0..1000 {
        let (u, v, x) = (next(), next(), next());
        let t = |a, b| passage_time_in(&f, a, b, &window).unwrap().time;
        assert_eq!(t(u, v).to_bits(), t(v, u).to_bits());
        assert!(t(u, x) <= t(u, v) + t(v, x) + 1e-9);
        assert_eq!(t(u, u), 0.0);
    }
}

#[test]
fn window_doubling_and_subpath_optimality() {
    let policy = WindowPolicy::default();
    for seed in 0..100u64 {
        let f = EdgeWeightField::new(
            WeightDistribution::exponential(1.0).unwrap(),
            9000 + seed,
            0,
        )
        .unwrap();
        let dst = p(6 + (seed % 5) as i64, (seed % 7) as i64 - 3);
        let r = passage_time(&f, p(0, 0), dst, &policy).unwrap();
        assert!(!r.touched_boundary);
        let used = r.window_used;
        let bigger = used.grown(used.width().max(used.height()) as i64 / 2 + 1);
        assert!(bigger.width() >= 2 * used.width() && bigger.height() >= 2 * used.height());
        let again = passage_time_in(&f, p(0, 0), dst, &bigger).unwrap();
        assert_eq!(again.time, r.time);
        assert_eq!(again.path, r.path);
        for j in 1..r.path.len() {
            let sub = passage_time_in(&f, p(0, 0), r.path[j], &used).unwrap();
            assert_eq!(sub.path, r.path[..=j].to_vec(), "seed {seed}, prefix {j}");
        }
    }
}

#[test]
fn resampling_contracts() {
    let policy = WindowPolicy::default();
    let dist = WeightDistribution::exponential(1.0).unwrap();
    let f = EdgeWeightField::new(dist, 5, 0).unwrap();
    let base = passage_time(&f, p(0, 0), p(7, 3), &policy).unwrap();
    let none = resample_passage_time(&f, p(0, 0), p(7, 3), |_| false, 1, &policy).unwrap();
    assert_eq!(none.time.to_bits(), base.time.to_bits());
    assert_eq!(none.path, base.path);
    let all = resample_passage_time(&f, p(0, 0), p(7, 3), |_| true, 1, &policy).unwrap();
    let alt = passage_time(&f.with_stream(1), p(0, 0), p(7, 3), &policy).unwrap();
    assert_eq!(all.time.to_bits(), alt.time.to_bits());
    assert!(matches!(
        resample_passage_time(&f, p(0, 0), p(1, 0), |_| true, 0, &policy),
        Err(EngineError::StreamCollision(0))
    ));

    // T and T' are equal in law: two-sample statistic on 500 pairs
    let frame = DirectionFrame::axis();
    let diffs: Vec<f64> = (0..500u64)
        .map(|i| {
            let f = EdgeWeightField::new(dist, 10_000 + i, 0).unwrap();
            let half = |e: EdgeId| frame.project(e.midpoint()).0 < 5.0;
            let t = passage_time(&f, p(0, 0), p(10, 0), &policy).unwrap().time;
            let t2 = resample_passage_time(&f, p(0, 0), p(10, 0), half, 1, &policy)
                .unwrap()
                .time;
            t - t2
        })
        .collect();
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!(
        mean.abs() <= 3.0 * (var / n).sqrt(),
        "mean {mean}, se {}",
        (var / n).sqrt()
    );
}

#[test]
fn hitting_times() {
    let dist = WeightDistribution::exponential(1.0).unwrap();
    // singleton neighbour on a 2x2 window
    let window = Window::new(p(0, 0), p(1, 1)).unwrap();
    for seed in 0..50u64 {
        let f = EdgeWeightField::new(dist, seed, 0).unwrap();
        let target: BTreeSet<_> = [p(1, 0)].into();
        let h = hitting_time(&f, p(0, 0), &target, &window).unwrap();
        let best = exhaustive(&f, window, p(0, 0), |_| true, None);
        assert!((h.tau - best[window.index(p(1, 0))]).abs() <= 1e-12);
        assert!(h.frozen.contains(&p(0, 0)) && h.frozen.contains(&h.contact));
    }
    // ring around an interior source, and no tie events over many queries
    let window = Window::new(p(-4, -4), p(4, 4)).unwrap();
    let ring: BTreeSet<_> = window.points().filter(|q| window.on_boundary(*q)).collect();
    for seed in 0..10_000u64 {
        let f = EdgeWeightField::new(dist, 77_000 + seed, 0).unwrap();
        let h = hitting_time(&f, p(0, 0), &ring, &window).unwrap();
        if seed < 200 {
            let straight = |dx: i64, dy: i64| {
                (0..4)
                    .map(|s| w(&f, p(s * dx, s * dy), p((s + 1) * dx, (s + 1) * dy)))
                    .sum::<f64>()
            };
            let bound = [
                straight(1, 0),
                straight(-1, 0),
                straight(0, 1),
                straight(0, -1),
            ]
            .into_iter()
            .fold(f64::INFINITY, f64::min);
            assert!(h.tau <= bound);
            assert_eq!(h.frozen.intersection(&ring).count(), 1);
        }
    }
}

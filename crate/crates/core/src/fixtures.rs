//! Small deterministic graphs and grids for tests, benches and demos.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geo::{cell_of, unproject, LatLon, LocalXY};
use crate::params::{PipelineParams, BUCKETS};
use crate::quality::{GridCell, RideKey, SurfaceGrid};
use crate::routing::{edge_weight, sample_polyline, NodeId, RoadGraph, Router};

pub const ORIGIN: LatLon = LatLon::new(52.5, 13.4);

/// Point `x` m east and `y` m north of [`ORIGIN`].
pub fn at(x: f64, y: f64) -> LatLon {
    unproject(LocalXY { x, y }, ORIGIN)
}

pub fn empty_grid() -> SurfaceGrid {
    SurfaceGrid::new(PipelineParams::default().with_origin(ORIGIN)).expect("valid default params")
}

/// Histogram of ten samples that all sit in bucket `q`.
fn pure(q: u8) -> [u64; BUCKETS] {
    let mut h = [0; BUCKETS];
    h[(q - 1) as usize] = 10;
    h
}

/// Marks every cell along `polyline` with `histogram`, leaving `margin_m`
/// at both ends untouched.
pub fn paint(grid: &mut SurfaceGrid, polyline: &[LatLon], histogram: [u64; BUCKETS], margin_m: f64) {
    let pts = sample_polyline(polyline, 1.0);
    let n = pts.len();
    let skip = margin_m.ceil() as usize;
    for p in pts.iter().take(n.saturating_sub(skip)).skip(skip) {
        let Ok(idx) = cell_of(*p, &grid.params) else { continue };
        let mut cell = GridCell { histogram, ..Default::default() };
        cell.rides.insert(RideKey::of("fixture"));
        grid.cells.insert(idx, cell);
    }
}

/// Start 1 and goal 4, joined by three two-edge paths: via 2 a straight
/// 400 m over quality 5, via 5 about 418 m over quality 3, via 3 about
/// 600 m over quality 1. Raising the slider moves the route from the short
/// bumpy path to the long smooth one.
pub fn diamond() -> (RoadGraph, SurfaceGrid) {
    let mut g = RoadGraph::new();
    for (id, x, y) in [(1, 0.0, 0.0), (2, 200.0, 0.0), (3, 200.0, 224.0), (4, 400.0, 0.0), (5, 200.0, -60.0)] {
        g.add_node(id, at(x, y));
    }
    let mut grid = empty_grid();
    for (mid, q) in [(2, 5), (5, 3), (3, 1)] {
        for (a, b) in [(1, mid), (mid, 4)] {
            let i = g.add_edge(a, b, Vec::new(), true).expect("fixture edge");
            paint(&mut grid, &g.edges()[i].polyline, pure(q), 15.0);
        }
    }
    (g, grid)
}

/// `n` nodes scattered over 600 m × 600 m with random, partly one-way edges
/// and random cell qualities along them.
pub fn random_graph(seed: u64, n: usize) -> (RoadGraph, SurfaceGrid) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = RoadGraph::new();
    for id in 0..n as NodeId {
        g.add_node(id, at(rng.random_range(0.0..600.0), rng.random_range(0.0..600.0)));
    }
    let mut grid = empty_grid();
    for a in 0..n as NodeId {
        for b in 0..n as NodeId {
            if a == b || rng.random::<f64>() > 0.3 {
                continue;
            }
            let bidir = rng.random::<bool>();
            let Ok(i) = g.add_edge(a, b, Vec::new(), bidir) else { continue };
            let mut h = [0u64; BUCKETS];
            for v in h.iter_mut() {
                *v = rng.random_range(0..6);
            }
            h[rng.random_range(0..BUCKETS)] += 1;
            let margin = rng.random_range(0.0..40.0);
            paint(&mut grid, &g.edges()[i].polyline.clone(), h, margin);
        }
    }
    (g, grid)
}

/// The diamond plus 40 random graphs of 3 to 8 nodes.
pub fn small_graphs() -> Vec<(String, RoadGraph, SurfaceGrid)> {
    let (g, grid) = diamond();
    let mut out = vec![("diamond".to_string(), g, grid)];
    for seed in 0..40u64 {
        let n = 3 + (seed % 6) as usize;
        let (g, grid) = random_graph(seed, n);
        out.push((format!("random-{seed}-n{n}"), g, grid));
    }
    out
}

/// Lowest weight over every simple path from `from` to `to`, found by
/// enumerating them all, with the default penalty scale. Only usable on tiny
/// graphs.
pub fn exhaustive_best_weight(router: &Router, from: NodeId, to: NodeId, slider: u8) -> Option<f64> {
    fn walk(r: &Router, node: NodeId, to: NodeId, slider: u8, seen: &mut Vec<NodeId>, acc: f64, best: &mut Option<f64>) {
        if node == to {
            *best = Some(best.map_or(acc, |b: f64| b.min(acc)));
            return;
        }
        for &(edge, next, _) in r.graph().neighbours(node) {
            if seen.contains(&next) {
                continue;
            }
            let w = edge_weight(r.graph().edges()[edge].length_m, r.edge_qualities()[edge], slider, 1.0);
            seen.push(next);
            walk(r, next, to, slider, seen, acc + w, best);
            seen.pop();
        }
    }
    let mut best = None;
    walk(router, from, to, slider, &mut vec![from], 0.0, &mut best);
    best
}

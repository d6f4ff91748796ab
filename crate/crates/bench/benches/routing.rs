use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use veloqual_core::fixtures::{at, empty_grid, paint};
use veloqual_core::routing::{RouteRequest, Router};
use veloqual_core::RoadGraph;

/// `n × n` lattice with 100 m blocks; every third row is rough.
fn lattice(n: u64) -> Router {
    let mut g = RoadGraph::new();
    let mut grid = empty_grid();
    let id = |i: u64, j: u64| i * n + j;
    for i in 0..n {
        for j in 0..n {
            g.add_node(id(i, j), at(j as f64 * 100.0, i as f64 * 100.0));
        }
    }
    for i in 0..n {
        for j in 0..n {
            if j + 1 < n {
                let e = g.add_edge(id(i, j), id(i, j + 1), Vec::new(), true).unwrap();
                let h = if i % 3 == 0 { [0, 0, 0, 2, 8] } else { [8, 2, 0, 0, 0] };
                paint(&mut grid, &g.edges()[e].polyline.clone(), h, 5.0);
            }
            if i + 1 < n {
                g.add_edge(id(i, j), id(i + 1, j), Vec::new(), true).unwrap();
            }
        }
    }
    Router::new(g, &grid)
}

fn routes(c: &mut Criterion) {
    let router = lattice(40);
    let req = |slider| RouteRequest { from: at(0.0, 0.0), to: at(3900.0, 3900.0), slider };
    let mut g = c.benchmark_group("route_40x40");
    for slider in [0u8, 5, 10] {
        g.bench_function(format!("slider_{slider}"), |b| b.iter(|| router.route(black_box(&req(slider)))));
    }
    g.finish();
    c.bench_function("router_build_40x40", |b| {
        b.iter(|| lattice(black_box(40)))
    });
}

criterion_group!(benches, routes);
criterion_main!(benches);

//! Whole-pipeline runs over synthetic crowds.

use std::collections::BTreeMap;

use veloqual_core::geo::{haversine_m, LatLon};
use veloqual_core::synth::{chain_world, class_qualities, street_cells, Lane, SurfaceClass::*};
use veloqual_core::{run_experiment, PipelineParams, SurfaceClass, SurfaceGrid, SyntheticWorld};

const ORIGIN: LatLon = LatLon::new(52.5, 13.4);

fn four_streets() -> SyntheticWorld {
    chain_world(ORIGIN, &[Asphalt, PavingStones, FineGravel, Cobblestones], 600.0)
}

fn run(world: &SyntheticWorld, rides: usize, seed: u64) -> (SurfaceGrid, BTreeMap<SurfaceClass, f64>) {
    let grid = run_experiment(world, rides, seed, &PipelineParams::default()).unwrap();
    let q = class_qualities(world, &grid);
    (grid, q)
}

#[test]
fn class_ordering_is_recovered() {
    let (_, q) = run(&four_streets(), 200, 1);
    let v: Vec<f64> = SurfaceClass::ALL.iter().map(|c| q[c]).collect();
    assert!(v.windows(2).all(|w| w[0] < w[1]), "{q:?}");
    assert!(v[0] < 1.8 && v[3] > 3.4, "{q:?}");
}

#[test]
fn device_gain_does_not_matter() {
    let mut narrow = four_streets();
    narrow.device_gain = [1.0, 1.0];
    let mut wide = four_streets();
    wide.device_gain = [0.2, 2.0];
    let (_, a) = run(&narrow, 100, 2);
    let (_, b) = run(&wide, 100, 2);
    for c in SurfaceClass::ALL {
        assert!((a[&c] - b[&c]).abs() < 0.1, "{c:?}: {} vs {}", a[&c], b[&c]);
    }
}

#[test]
fn injected_stops_are_removed() {
    let plain = four_streets();
    let mut stopping = four_streets();
    stopping.stop_probability = 0.5;
    let (_, a) = run(&plain, 100, 3);
    let (_, b) = run(&stopping, 100, 3);
    for c in SurfaceClass::ALL {
        assert!((a[&c] - b[&c]).abs() < 0.1, "{c:?}: {} vs {}", a[&c], b[&c]);
    }
}

#[test]
fn mixed_street_is_bimodal() {
    // each ride also crosses a smooth and a rough street, so either lane of
    // the mixed street ends up at one end of the ride's own scale
    let mut w = chain_world(ORIGIN, &[Asphalt, PavingStones, Cobblestones, FineGravel, Cobblestones], 600.0);
    w.streets[2].alternate = Some(Lane { surface: Asphalt, share: 0.5 });
    let (grid, _) = run(&w, 200, 4);
    let cells: Vec<_> = street_cells(&w, 2, &grid, 15.0, 30.0)
        .into_iter()
        .filter(|c| grid.cells[c].ride_count() >= 20)
        .collect();
    assert!(cells.len() > 30);
    let mut hist = [0u64; 5];
    for c in &cells {
        for (h, n) in hist.iter_mut().zip(grid.cells[c].histogram) {
            *h += n;
        }
    }
    let total: u64 = hist.iter().sum();
    let low = (hist[0] + hist[1]) as f64 / total as f64;
    let high = (hist[3] + hist[4]) as f64 / total as f64;
    assert!(low > 0.25 && high > 0.25, "{hist:?}");
}

#[test]
fn same_seed_same_grid() {
    let w = four_streets();
    let a = run_experiment(&w, 8, 9, &PipelineParams::default()).unwrap();
    let b = run_experiment(&w, 8, 9, &PipelineParams::default()).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    assert!(haversine_m(a.params.grid_origin.unwrap(), ORIGIN) < 1500.0);
}

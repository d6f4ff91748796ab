use proptest::prelude::*;
use veloqual_core::cloud::{BumpinessPoint, BumpinessSeries};
use veloqual_core::export::to_geojson;
use veloqual_core::geo::{cell_of, cell_polygon, ring_centroid, BBox, LatLon};
use veloqual_core::quality::{aggregate, quantize_ride, SurfaceGrid};
use veloqual_core::{PipelineParams, QuantizedRide};

const ORIGIN: LatLon = LatLon::new(52.5, 13.4);

fn params() -> PipelineParams {
    PipelineParams::default().with_origin(ORIGIN)
}

/// A ride wandering around a 300 m square with random bumpiness.
fn random_rides(seed: u64, n: usize) -> Vec<QuantizedRide> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let (mut lat, mut lon) = (52.501 + rng.random::<f64>() * 0.002, 13.401 + rng.random::<f64>() * 0.003);
            let points = (0..rng.random_range(5..200))
                .map(|k| {
                    lat += rng.random_range(-2e-5..2e-5);
                    lon += rng.random_range(-3e-5..3e-5);
                    BumpinessPoint { ts_ms: k * 100, lat, lon, b: rng.random::<f64>() }
                })
                .collect();
            quantize_ride(&BumpinessSeries { ride_id: format!("r{seed}-{i}"), points }, &params()).unwrap()
        })
        .collect()
}

#[test]
fn sharded_merge_equals_single_pass() {
    let rides = random_rides(1, 50);
    let whole = aggregate(&rides, &params()).unwrap().grid.to_json();
    for seed in 0..3u64 {
        use rand::{seq::SliceRandom, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..rides.len()).collect();
        order.shuffle(&mut rng);
        let shards = 2 + seed as usize;
        let mut merged = SurfaceGrid::new(params()).unwrap();
        for s in 0..shards {
            let part: Vec<&QuantizedRide> = order.iter().skip(s).step_by(shards).map(|&i| &rides[i]).collect();
            merged.merge(&aggregate(part, &params()).unwrap().grid).unwrap();
        }
        assert_eq!(merged.to_json(), whole, "sharding {seed}");
    }
}

#[test]
fn exported_geojson_is_valid() {
    let grid = aggregate(&random_rides(2, 30), &params()).unwrap().grid;
    let text = to_geojson(&grid, None);
    let fc: geojson::FeatureCollection = text.parse::<geojson::GeoJson>().unwrap().try_into().unwrap();
    assert_eq!(fc.features.len(), grid.cells.len());
    for f in &fc.features {
        let Some(geojson::Value::Polygon(rings)) = f.geometry.as_ref().map(|g| &g.value) else {
            panic!("not a polygon");
        };
        assert_eq!(rings.len(), 1);
        let ring = &rings[0];
        assert_eq!(ring.len(), 5);
        assert_eq!(ring[0], ring[4]);
        // counter-clockwise exterior ring: positive shoelace area
        let area2: f64 = ring.windows(2).map(|w| w[0][0] * w[1][1] - w[1][0] * w[0][1]).sum();
        assert!(area2 > 0.0);
        let id = match &f.id {
            Some(geojson::feature::Id::String(s)) => s.clone(),
            other => panic!("{other:?}"),
        };
        let pts: Vec<LatLon> = ring.iter().map(|c| LatLon::new(c[1], c[0])).collect();
        let centroid = ring_centroid(&pts.try_into().unwrap());
        assert_eq!(cell_of(centroid, &grid.params).unwrap().key(), id);
        let props = f.properties.as_ref().unwrap();
        let mean = props["mean"].as_f64().unwrap();
        assert!((1.0..=5.0).contains(&mean));
        for key in ["median", "stddev", "ride_count", "sample_count", "color"] {
            assert!(props.contains_key(key), "{key}");
        }
    }
}

#[test]
fn bbox_query_is_a_subset() {
    let grid = aggregate(&random_rides(3, 20), &params()).unwrap().grid;
    let bbox = BBox { min_lon: 13.402, min_lat: 52.5015, max_lon: 13.403, max_lat: 52.502 };
    let v: serde_json::Value = serde_json::from_str(&to_geojson(&grid, Some(&bbox))).unwrap();
    let feats = v["features"].as_array().unwrap();
    assert!(!feats.is_empty() && feats.len() < grid.cells.len());
    for f in feats {
        let idx = veloqual_core::CellIndex::parse_key(f["id"].as_str().unwrap()).unwrap();
        let ring = cell_polygon(idx, &grid.params).unwrap();
        assert!(BBox::of_points(&ring).intersects(&bbox));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn merge_commutes(a in 0u64..1000, b in 0u64..1000) {
        let (ra, rb) = (random_rides(a, 4), random_rides(b + 1000, 4));
        let ga = aggregate(&ra, &params()).unwrap().grid;
        let gb = aggregate(&rb, &params()).unwrap().grid;
        let mut ab = ga.clone();
        ab.merge(&gb).unwrap();
        let mut ba = gb.clone();
        ba.merge(&ga).unwrap();
        prop_assert_eq!(ab.to_json(), ba.to_json());
    }

    #[test]
    fn snapshot_round_trip(seed in 0u64..1000) {
        let g = aggregate(&random_rides(seed, 5), &params()).unwrap().grid;
        let back = SurfaceGrid::from_json(&g.to_json()).unwrap();
        prop_assert_eq!(&back, &g);
    }
}

//! Glue between the stages: from bumpiness series to a grid.

use crate::cloud::BumpinessSeries;
use crate::geo::LatLon;
use crate::params::PipelineParams;
use crate::quality::{aggregate, quantize_ride, Aggregation, QualityError, QuantizedRide};

/// Quantizes every non-empty series and bins them into a grid. Without a
/// configured origin, one is derived from the data (see
/// [`PipelineParams::origin_for`]); an empty input is anchored at 0°, 0°.
pub fn grid_from_series(series: &[BumpinessSeries], params: &PipelineParams) -> Result<Aggregation, QualityError> {
    let quantized: Vec<QuantizedRide> = series
        .iter()
        .filter(|s| !s.points.is_empty())
        .map(|s| quantize_ride(s, params))
        .collect::<Result<_, _>>()?;
    let points = quantized.iter().flat_map(|q| q.samples.iter().map(|s| LatLon::new(s.lat, s.lon)));
    let origin = params.origin_for(points).unwrap_or(LatLon::new(0.0, 0.0));
    aggregate(&quantized, &params.clone().with_origin(origin))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::BumpinessPoint;

    fn series(id: &str, lat: f64, bs: &[f64]) -> BumpinessSeries {
        let points = bs
            .iter()
            .enumerate()
            .map(|(i, b)| BumpinessPoint { ts_ms: i as i64 * 100, lat, lon: 13.4 + i as f64 * 1e-4, b: *b })
            .collect();
        BumpinessSeries { ride_id: id.into(), points }
    }

    #[test]
    fn derives_origin_and_skips_empty() {
        let s = [series("a", 52.517, &[1.0, 2.0, 3.0]), series("e", 0.0, &[]), series("b", 52.523, &[3.0, 1.0])];
        let agg = grid_from_series(&s, &PipelineParams::default()).unwrap();
        assert_eq!(agg.grid.params.grid_origin, Some(LatLon::new(52.51, 13.4)));
        assert_eq!(agg.skipped, 0);
        let total: u64 = agg.grid.cells.values().map(|c| c.sample_count()).sum();
        assert_eq!(total, 5);
    }

    #[test]
    fn configured_origin_wins() {
        let p = PipelineParams::default().with_origin(LatLon::new(52.0, 13.0));
        let agg = grid_from_series(&[series("a", 52.5, &[1.0])], &p).unwrap();
        assert_eq!(agg.grid.params.grid_origin, Some(LatLon::new(52.0, 13.0)));
    }

    #[test]
    fn empty_input_gives_empty_grid() {
        let agg = grid_from_series(&[], &PipelineParams::default()).unwrap();
        assert!(agg.grid.cells.is_empty());
    }
}

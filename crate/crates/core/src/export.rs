//! GeoJSON export of a [`SurfaceGrid`].

use serde_json::{json, Value};
use thiserror::Error;

use crate::geo::{cell_polygon, BBox, CellIndex};
use crate::quality::{GridCell, SurfaceGrid};

#[derive(Debug, Error, PartialEq)]
#[error("mean quality {0} outside [1, 5]")]
pub struct OutOfRange(pub f64);

const PALETTE: [(f64, &str); 5] = [
    (1.8, "#1a9850"),
    (2.6, "#91cf60"),
    (3.4, "#fee08b"),
    (4.2, "#fc8d59"),
    (f64::INFINITY, "#d73027"),
];

/// Five equal-width bands over [1, 5], green to red.
pub fn color_of(mean: f64) -> Result<&'static str, OutOfRange> {
    if !(1.0..=5.0).contains(&mean) {
        return Err(OutOfRange(mean));
    }
    Ok(PALETTE.iter().find(|(upper, _)| mean < *upper).map(|(_, c)| *c).unwrap())
}

fn feature(idx: CellIndex, cell: &GridCell, grid: &SurfaceGrid) -> Option<Value> {
    let mean = cell.mean()?;
    let ring = cell_polygon(idx, &grid.params).ok()?;
    let coords: Vec<[f64; 2]> = ring.iter().map(|p| [p.lon, p.lat]).collect();
    Some(json!({
        "type": "Feature",
        "id": idx.key(),
        "geometry": { "type": "Polygon", "coordinates": [coords] },
        "properties": {
            "mean": mean,
            "median": cell.median(),
            "stddev": cell.stddev(),
            "ride_count": cell.ride_count(),
            "sample_count": cell.sample_count(),
            "color": color_of(mean).ok()?,
        },
    }))
}

/// One Polygon feature per cell, ordered by `ix` then `iy`. With a bounding
/// box, only cells whose extent touches it are emitted.
pub fn to_geojson_value(grid: &SurfaceGrid, bbox: Option<&BBox>) -> Value {
    let features: Vec<Value> = grid
        .cells
        .iter()
        .filter(|(idx, _)| match (bbox, cell_polygon(**idx, &grid.params)) {
            (None, _) => true,
            (Some(b), Ok(ring)) => BBox::of_points(&ring).intersects(b),
            (Some(_), Err(_)) => false,
        })
        .filter_map(|(idx, cell)| feature(*idx, cell, grid))
        .collect();
    json!({ "type": "FeatureCollection", "features": features })
}

pub fn to_geojson(grid: &SurfaceGrid, bbox: Option<&BBox>) -> String {
    to_geojson_value(grid, bbox).to_string()
}

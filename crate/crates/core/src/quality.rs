//! Per-ride percentile quantization and crowd aggregation onto the grid.
//!
//! Every bumpiness value is replaced by the index (1 to 5) of the ride's own
//! percentile interval it falls into, so rides recorded with different phones
//! and mounts become comparable. Quantized samples from all rides are then
//! binned into grid cells; each cell keeps the histogram of bucket values and
//! the set of contributing rides.

use std::collections::{BTreeMap, BTreeSet};

use serde::de::Error as _;
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cloud::BumpinessSeries;
use crate::geo::{cell_of, CellIndex, GeoError, LatLon};
use crate::params::{ParamsError, PipelineParams, BUCKETS};

pub const GRID_FORMAT: &str = "veloqual-grid v1";

#[derive(Debug, Error, PartialEq)]
pub enum QualityError {
    #[error("bumpiness series is empty")]
    EmptySeries,
    #[error("grids were built with different parameters")]
    IncompatibleGrids,
    #[error(transparent)]
    Params(#[from] ParamsError),
    #[error("invalid grid snapshot: {0}")]
    Snapshot(String),
}

/// Position of `q` among `n` sorted values: lower order statistic and the
/// interpolation weight towards the next one. Products that land within
/// rounding of an integer snap to it.
fn rank(q: f64, n: usize) -> (usize, f64) {
    let pos = q * (n - 1) as f64;
    let snapped = pos.round();
    let pos = if (pos - snapped).abs() < 1e-9 { snapped } else { pos };
    let lo = (pos.floor() as usize).min(n - 1);
    (lo, pos - lo as f64)
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Linear-interpolation quantiles (value at rank `q·(n−1)`).
pub fn ride_quantiles(values: &[f64], breaks: &[f64]) -> Result<Vec<f64>, QualityError> {
    if values.is_empty() {
        return Err(QualityError::EmptySeries);
    }
    let v = sorted(values);
    Ok(breaks
        .iter()
        .map(|&q| {
            let (lo, frac) = rank(q, v.len());
            if frac == 0.0 {
                v[lo]
            } else {
                v[lo] + frac * (v[lo + 1] - v[lo])
            }
        })
        .collect())
}

/// Hashed ride identifier; only this leaves the process in grid snapshots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RideKey(pub u64);

impl RideKey {
    pub fn of(ride_id: &str) -> Self {
        let d = Sha256::digest(ride_id.as_bytes());
        let mut b = [0u8; 8];
        b.copy_from_slice(&d[..8]);
        Self(u64::from_be_bytes(b))
    }

    pub fn hex(&self) -> String {
        format!("{:016x}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantizedSample {
    pub lat: f64,
    pub lon: f64,
    /// 1 (smoothest fifth of the ride) to 5 (roughest).
    pub bucket: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedRide {
    pub ride_id: String,
    pub samples: Vec<QuantizedSample>,
}

/// Replaces every value with its bucket: the smallest `k` with
/// `v <= break_k`.
///
/// Each break lies between two adjacent order statistics with no value
/// strictly between them, so `v <= break_k` is decided against the lower
/// order statistic. This is exact and scale-invariant, unlike comparing
/// against the interpolated float.
pub fn quantize_ride(series: &BumpinessSeries, params: &PipelineParams) -> Result<QuantizedRide, QualityError> {
    params.validate()?;
    let values: Vec<f64> = series.points.iter().map(|p| p.b).collect();
    if values.is_empty() {
        return Err(QualityError::EmptySeries);
    }
    let v = sorted(&values);
    let thresholds: Vec<f64> = params.percentile_breaks.iter().map(|&q| v[rank(q, v.len()).0]).collect();
    let samples = series
        .points
        .iter()
        .map(|p| {
            let k = thresholds.iter().position(|&t| p.b <= t).unwrap_or(BUCKETS - 1);
            QuantizedSample { lat: p.lat, lon: p.lon, bucket: k as u8 + 1 }
        })
        .collect();
    Ok(QuantizedRide { ride_id: series.ride_id.clone(), samples })
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GridCell {
    pub histogram: [u64; BUCKETS],
    pub rides: BTreeSet<RideKey>,
}

impl GridCell {
    pub fn sample_count(&self) -> u64 {
        self.histogram.iter().sum()
    }

    pub fn ride_count(&self) -> usize {
        self.rides.len()
    }

    fn bucket_values(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.histogram.iter().enumerate().map(|(k, &c)| ((k + 1) as f64, c as f64))
    }

    pub fn mean(&self) -> Option<f64> {
        let n = self.sample_count();
        (n > 0).then(|| self.bucket_values().map(|(v, c)| v * c).sum::<f64>() / n as f64)
    }

    /// Smallest bucket whose cumulative count reaches half of the samples.
    pub fn median(&self) -> Option<u8> {
        let n = self.sample_count();
        if n == 0 {
            return None;
        }
        let mut cum = 0;
        for (k, &c) in self.histogram.iter().enumerate() {
            cum += c;
            if 2 * cum >= n {
                return Some(k as u8 + 1);
            }
        }
        unreachable!("cumulative count reaches n")
    }

    /// Population standard deviation of the bucket values.
    pub fn stddev(&self) -> Option<f64> {
        let mean = self.mean()?;
        let n = self.sample_count() as f64;
        let var = self.bucket_values().map(|(v, c)| c * (v - mean).powi(2)).sum::<f64>() / n;
        Some(var.sqrt())
    }

    pub fn merge(&mut self, other: &GridCell) {
        for (a, b) in self.histogram.iter_mut().zip(other.histogram) {
            *a += b;
        }
        self.rides.extend(other.rides.iter().copied());
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceGrid {
    pub params: PipelineParams,
    pub cells: BTreeMap<CellIndex, GridCell>,
}

/// Result of [`aggregate`]: the grid and how many samples fell outside the
/// projection range and were skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregation {
    pub grid: SurfaceGrid,
    pub skipped: usize,
}

impl SurfaceGrid {
    /// Empty grid. `params` must carry a grid origin.
    pub fn new(params: PipelineParams) -> Result<Self, QualityError> {
        params.validate()?;
        params.origin()?;
        Ok(Self { params, cells: BTreeMap::new() })
    }

    /// Bins one ride into the grid, returning the number of samples skipped
    /// because they lie outside the projection range.
    pub fn add_ride(&mut self, ride: &QuantizedRide) -> usize {
        let key = RideKey::of(&ride.ride_id);
        let mut skipped = 0;
        for s in &ride.samples {
            match cell_of(LatLon::new(s.lat, s.lon), &self.params) {
                Ok(idx) => {
                    let cell = self.cells.entry(idx).or_default();
                    cell.histogram[(s.bucket.clamp(1, BUCKETS as u8) - 1) as usize] += 1;
                    cell.rides.insert(key);
                }
                Err(GeoError::OutOfLocalRange) => skipped += 1,
                Err(e) => unreachable!("origin validated in SurfaceGrid::new: {e}"),
            }
        }
        if skipped > 0 {
            log::warn!("ride {}: {skipped} samples outside the grid range skipped", ride.ride_id);
        }
        skipped
    }

    /// Histogram addition and ride-set union, cell by cell.
    pub fn merge(&mut self, other: &SurfaceGrid) -> Result<(), QualityError> {
        if self.params != other.params {
            return Err(QualityError::IncompatibleGrids);
        }
        for (idx, cell) in &other.cells {
            self.cells.entry(*idx).or_default().merge(cell);
        }
        Ok(())
    }

    pub fn cell_quality(&self, c: CellIndex) -> Option<f64> {
        self.cells.get(&c).and_then(GridCell::mean)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("grid serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, QualityError> {
        serde_json::from_str(text).map_err(|e| QualityError::Snapshot(e.to_string()))
    }
}

/// Bins every quantized ride into a fresh grid.
pub fn aggregate<'a, I>(rides: I, params: &PipelineParams) -> Result<Aggregation, QualityError>
where
    I: IntoIterator<Item = &'a QuantizedRide>,
{
    let mut grid = SurfaceGrid::new(params.clone())?;
    let skipped = rides.into_iter().map(|r| grid.add_ride(r)).sum();
    Ok(Aggregation { grid, skipped })
}

pub fn cell_quality(grid: &SurfaceGrid, c: CellIndex) -> Option<f64> {
    grid.cell_quality(c)
}

#[derive(Serialize, Deserialize)]
struct CellRecord {
    histogram: [u64; BUCKETS],
    sample_count: u64,
    ride_count: usize,
    mean: f64,
    median: u8,
    stddev: f64,
    rides: Vec<String>,
}

struct Cells<'a>(&'a BTreeMap<CellIndex, GridCell>);

impl Serialize for Cells<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.0.len()))?;
        for (idx, c) in self.0.iter().filter(|(_, c)| c.sample_count() > 0) {
            let rec = CellRecord {
                histogram: c.histogram,
                sample_count: c.sample_count(),
                ride_count: c.ride_count(),
                mean: c.mean().unwrap_or_default(),
                median: c.median().unwrap_or_default(),
                stddev: c.stddev().unwrap_or_default(),
                rides: c.rides.iter().map(RideKey::hex).collect(),
            };
            map.serialize_entry(&idx.key(), &rec)?;
        }
        map.end()
    }
}

impl Serialize for SurfaceGrid {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(3))?;
        map.serialize_entry("format", GRID_FORMAT)?;
        map.serialize_entry("params", &self.params)?;
        map.serialize_entry("cells", &Cells(&self.cells))?;
        map.end()
    }
}

#[derive(Deserialize)]
struct GridFile {
    format: String,
    params: PipelineParams,
    cells: BTreeMap<String, CellRecord>,
}

impl<'de> Deserialize<'de> for SurfaceGrid {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let f = GridFile::deserialize(d)?;
        if f.format != GRID_FORMAT {
            return Err(D::Error::custom(format!("unknown format {:?}", f.format)));
        }
        let mut grid = SurfaceGrid::new(f.params).map_err(D::Error::custom)?;
        for (key, rec) in f.cells {
            let idx = CellIndex::parse_key(&key).ok_or_else(|| D::Error::custom(format!("bad cell key {key:?}")))?;
            let rides = rec
                .rides
                .iter()
                .map(|h| u64::from_str_radix(h, 16).map(RideKey))
                .collect::<Result<BTreeSet<_>, _>>()
                .map_err(D::Error::custom)?;
            let cell = GridCell { histogram: rec.histogram, rides };
            if cell.sample_count() != rec.sample_count || cell.ride_count() != rec.ride_count {
                return Err(D::Error::custom(format!("cell {key}: counts disagree with histogram")));
            }
            if cell.ride_count() as u64 > cell.sample_count() {
                return Err(D::Error::custom(format!("cell {key}: more rides than samples")));
            }
            grid.cells.insert(idx, cell);
        }
        Ok(grid)
    }
}

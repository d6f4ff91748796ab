//! Tunable constants of the pipeline.
//!
//! Defaults: 50 Hz motion,
//! on-phone moving average of 30 samples keeping every fifth, 10 s trimming,
//! stop removal below 5 km/h or under one minute, a 10-sample moving variance,
//! quintile quantization and a 10 m grid.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::LatLon;

/// Number of quality buckets; bucket values run from 1 to `BUCKETS`.
pub const BUCKETS: usize = 5;

#[derive(Debug, Error, PartialEq)]
pub enum ParamsError {
    #[error("{0} must be at least 1")]
    ZeroWindow(&'static str),
    #[error("percentile breaks must be {BUCKETS} strictly increasing values in (0, 1] ending at 1.0")]
    BadBreaks,
    #[error("cell size must be positive and finite")]
    BadCellSize,
    #[error("{0} must be finite and non-negative")]
    BadThreshold(&'static str),
    #[error("grid origin is not set")]
    MissingOrigin,
    #[error("invalid params file: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineParams {
    pub ma_window: usize,
    pub keep_every: usize,
    pub raw_rate_hz: u32,
    pub trim_seconds: f64,
    pub min_speed_kmh: f64,
    pub min_segment_seconds: f64,
    pub var_window: usize,
    pub percentile_breaks: Vec<f64>,
    pub cell_size_m: f64,
    /// South-west anchor of the grid. When unset, it is derived from the data
    /// (see [`PipelineParams::origin_for`]).
    pub grid_origin: Option<LatLon>,
}

impl Default for PipelineParams {
    fn default() -> Self {
        Self {
            ma_window: 30,
            keep_every: 5,
            raw_rate_hz: 50,
            trim_seconds: 10.0,
            min_speed_kmh: 5.0,
            min_segment_seconds: 60.0,
            var_window: 10,
            percentile_breaks: vec![0.2, 0.4, 0.6, 0.8, 1.0],
            cell_size_m: 10.0,
            grid_origin: None,
        }
    }
}

impl PipelineParams {
    pub fn from_json(text: &str) -> Result<Self, ParamsError> {
        let params: Self =
            serde_json::from_str(text).map_err(|e| ParamsError::Parse(e.to_string()))?;
        params.validate()?;
        Ok(params)
    }

    pub fn with_origin(mut self, origin: LatLon) -> Self {
        self.grid_origin = Some(origin);
        self
    }

    pub fn validate(&self) -> Result<(), ParamsError> {
        if self.ma_window == 0 {
            return Err(ParamsError::ZeroWindow("ma_window"));
        }
        if self.keep_every == 0 {
            return Err(ParamsError::ZeroWindow("keep_every"));
        }
        if self.var_window == 0 {
            return Err(ParamsError::ZeroWindow("var_window"));
        }
        if self.raw_rate_hz == 0 {
            return Err(ParamsError::ZeroWindow("raw_rate_hz"));
        }
        let b = &self.percentile_breaks;
        if b.len() != BUCKETS
            || b.iter().any(|q| !(*q > 0.0 && *q <= 1.0))
            || b.windows(2).any(|w| w[0] >= w[1])
            || b[BUCKETS - 1] != 1.0
        {
            return Err(ParamsError::BadBreaks);
        }
        if !(self.cell_size_m.is_finite() && self.cell_size_m > 0.0) {
            return Err(ParamsError::BadCellSize);
        }
        for (name, v) in [
            ("trim_seconds", self.trim_seconds),
            ("min_speed_kmh", self.min_speed_kmh),
            ("min_segment_seconds", self.min_segment_seconds),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(ParamsError::BadThreshold(name));
            }
        }
        Ok(())
    }

    pub fn origin(&self) -> Result<LatLon, ParamsError> {
        self.grid_origin.ok_or(ParamsError::MissingOrigin)
    }

    /// Configured origin, or the minimum latitude/longitude of `points`
    /// floored to 0.01°. Returns `None` when no origin is configured and
    /// `points` is empty.
    pub fn origin_for<I>(&self, points: I) -> Option<LatLon>
    where
        I: IntoIterator<Item = LatLon>,
    {
        if let Some(o) = self.grid_origin {
            return Some(o);
        }
        let (lat, lon) = points.into_iter().fold(
            (f64::INFINITY, f64::INFINITY),
            |(la, lo), p| (la.min(p.lat), lo.min(p.lon)),
        );
        if !lat.is_finite() {
            return None;
        }
        Some(LatLon::new(floor_to_hundredth(lat), floor_to_hundredth(lon)))
    }

    /// Motion sample rate after on-phone decimation.
    pub fn downsampled_rate_hz(&self) -> u32 {
        self.raw_rate_hz / self.keep_every as u32
    }
}

fn floor_to_hundredth(v: f64) -> f64 {
    (v * 100.0).floor() / 100.0
}

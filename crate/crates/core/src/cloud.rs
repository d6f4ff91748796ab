//! Server-side cleaning of uploaded rides and the bumpiness signal.
//!
//! A ride is trimmed at both ends, cut into moving segments (stops removed)
//! and each segment's three motion axes are collapsed into one scalar per
//! sample: the mean of the per-axis trailing moving variances.

use std::fmt::Write as _;

use log::debug;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::edge::{downsample_ride, EdgeError};
use crate::geo::{haversine_m, position_at, GeoError, LatLon};
use crate::params::PipelineParams;
use crate::ride::{fmt_f64, GpsFix, MotionSample, Ride};

#[derive(Debug, Error, PartialEq)]
pub enum CloudError {
    #[error("ride lasts {duration_ms} ms, not enough to trim {trim_ms} ms from both ends")]
    RideTooShort { duration_ms: i64, trim_ms: i64 },
    #[error("segment has {samples} samples, fewer than the variance window of {window}")]
    SegmentTooShort { samples: usize, window: usize },
    #[error("window must be at least 1")]
    ZeroWindow,
    #[error(transparent)]
    Edge(#[from] EdgeError),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error("line {0}: malformed bumpiness record")]
    BadRecord(usize),
}

/// A stretch of a ride where the cyclist kept moving for long enough.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionSegment {
    pub samples: Vec<MotionSample>,
    pub fixes: Vec<GpsFix>,
    pub mean_speed_kmh: f64,
}

impl MotionSegment {
    pub fn span_ms(&self) -> (i64, i64) {
        (self.fixes[0].ts_ms, self.fixes[self.fixes.len() - 1].ts_ms)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BumpinessPoint {
    pub ts_ms: i64,
    pub lat: f64,
    pub lon: f64,
    pub b: f64,
}

impl BumpinessPoint {
    pub fn pos(&self) -> LatLon {
        LatLon::new(self.lat, self.lon)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BumpinessSeries {
    pub ride_id: String,
    pub points: Vec<BumpinessPoint>,
}

fn ms(seconds: f64) -> i64 {
    (seconds * 1000.0).round() as i64
}

/// Keeps fixes and motion samples within `[t0 + trim, t_end - trim]`, where
/// the span is that of the GPS trace.
pub fn trim_ends(ride: &Ride, trim_seconds: f64) -> Result<Ride, CloudError> {
    let trim_ms = ms(trim_seconds);
    let duration_ms = ride.duration_ms();
    let Some((t0, t1)) = ride.fix_span() else {
        return Err(CloudError::RideTooShort { duration_ms, trim_ms });
    };
    if trim_ms == 0 {
        return Ok(ride.clone());
    }
    if duration_ms <= 2 * trim_ms {
        return Err(CloudError::RideTooShort { duration_ms, trim_ms });
    }
    let (lo, hi) = (t0 + trim_ms, t1 - trim_ms);
    let keep = |t: i64| t >= lo && t <= hi;
    Ok(Ride {
        fixes: ride.fixes.iter().filter(|f| keep(f.ts_ms)).copied().collect(),
        motion: ride.motion.iter().filter(|m| keep(m.ts_ms)).copied().collect(),
        ..ride.clone()
    })
}

pub fn interval_speed_kmh(a: &GpsFix, b: &GpsFix) -> f64 {
    let dt_s = (b.ts_ms - a.ts_ms) as f64 / 1000.0;
    haversine_m(a.pos(), b.pos()) / dt_s * 3.6
}

/// Maximal runs of consecutive fix intervals at or above the minimum speed
/// that last at least the minimum duration. Motion samples are assigned by
/// timestamp to the run whose fix span (inclusive) contains them.
pub fn split_moving_segments(ride: &Ride, params: &PipelineParams) -> Vec<MotionSegment> {
    let min_ms = ms(params.min_segment_seconds);
    let fixes = &ride.fixes;
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut start: Option<usize> = None;
    for i in 0..fixes.len().saturating_sub(1) {
        let moving = interval_speed_kmh(&fixes[i], &fixes[i + 1]) >= params.min_speed_kmh;
        match (moving, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                runs.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push((s, fixes.len() - 1));
    }

    runs.into_iter()
        .filter(|&(a, b)| fixes[b].ts_ms - fixes[a].ts_ms >= min_ms)
        .map(|(a, b)| {
            let seg_fixes = fixes[a..=b].to_vec();
            let (t0, t1) = (seg_fixes[0].ts_ms, seg_fixes[seg_fixes.len() - 1].ts_ms);
            let lo = ride.motion.partition_point(|m| m.ts_ms < t0);
            let hi = ride.motion.partition_point(|m| m.ts_ms <= t1);
            let dist: f64 = seg_fixes.windows(2).map(|w| haversine_m(w[0].pos(), w[1].pos())).sum();
            MotionSegment {
                samples: ride.motion[lo..hi].to_vec(),
                mean_speed_kmh: dist / ((t1 - t0) as f64 / 1000.0) * 3.6,
                fixes: seg_fixes,
            }
        })
        .collect()
}

/// Trailing population variance over `window` samples; `len - window + 1`
/// outputs. Uses the add/remove form of Welford's update, refreshed with an
/// exact two-pass pass periodically.
pub fn moving_variance(series: &[f64], window: usize) -> Result<Vec<f64>, CloudError> {
    if window == 0 {
        return Err(CloudError::ZeroWindow);
    }
    if window > series.len() {
        return Err(CloudError::SegmentTooShort { samples: series.len(), window });
    }
    let w = window as f64;
    // shifted by the first value so a constant window yields exactly zero
    let exact = |win: &[f64]| {
        let k = win[0];
        let md = win.iter().map(|v| v - k).sum::<f64>() / w;
        let m2: f64 = win.iter().map(|v| (v - k - md).powi(2)).sum();
        (k + md, m2)
    };
    let n_out = series.len() - window + 1;
    let mut out = Vec::with_capacity(n_out);
    let (mut mean, mut m2) = exact(&series[..window]);
    out.push(m2 / w);
    for i in 1..n_out {
        if i % 256 == 0 {
            (mean, m2) = exact(&series[i..i + window]);
        } else {
            let (old, new) = (series[i - 1], series[i + window - 1]);
            let next_mean = mean + (new - old) / w;
            m2 += (new - old) * (new - next_mean + old - mean);
            mean = next_mean;
        }
        out.push((m2 / w).max(0.0));
    }
    Ok(out)
}

/// Mean of the three axis moving variances, positioned on the interpolated
/// GPS path. Point `i` carries the timestamp of the newest sample in its
/// window.
pub fn bumpiness(
    segment: &MotionSegment,
    params: &PipelineParams,
    fixes: &[GpsFix],
    ride_id: &str,
) -> Result<BumpinessSeries, CloudError> {
    let s = &segment.samples;
    let window = params.var_window;
    let vx = moving_variance(&s.iter().map(|m| m.x).collect::<Vec<_>>(), window)?;
    let vy = moving_variance(&s.iter().map(|m| m.y).collect::<Vec<_>>(), window)?;
    let vz = moving_variance(&s.iter().map(|m| m.z).collect::<Vec<_>>(), window)?;
    let points = s[window - 1..]
        .iter()
        .zip(vx.iter().zip(&vy).zip(&vz))
        .map(|(m, ((x, y), z))| {
            let p = position_at(fixes, m.ts_ms)?;
            Ok(BumpinessPoint { ts_ms: m.ts_ms, lat: p.lat, lon: p.lon, b: (x + y + z) / 3.0 })
        })
        .collect::<Result<Vec<_>, GeoError>>()?;
    Ok(BumpinessSeries { ride_id: ride_id.to_string(), points })
}

/// The whole server-side preprocessing for one ride: downsampling when the
/// upload is raw, trimming, stop removal and bumpiness. Segments with fewer
/// samples than the variance window are skipped. Points of all segments are
/// concatenated in time order.
pub fn preprocess_ride(ride: &Ride, params: &PipelineParams) -> Result<BumpinessSeries, CloudError> {
    let down;
    let ride = if ride.downsampled {
        ride
    } else {
        down = downsample_ride(ride, params)?;
        &down
    };
    let trimmed = trim_ends(ride, params.trim_seconds)?;
    let mut out = BumpinessSeries { ride_id: ride.ride_id.clone(), points: Vec::new() };
    for seg in split_moving_segments(&trimmed, params) {
        match bumpiness(&seg, params, &trimmed.fixes, &ride.ride_id) {
            Ok(series) => out.points.extend(series.points),
            Err(CloudError::SegmentTooShort { samples, .. }) => {
                debug!("ride {}: skipping segment with {samples} samples", ride.ride_id);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

pub const BUMPINESS_HEADER: &str = "ts_ms,lat,lon,b";

/// `# ride_id=<id>`, the column header, then one `ts_ms,lat,lon,b` row per
/// point. Values round-trip exactly.
pub fn write_bumpiness(series: &BumpinessSeries) -> String {
    let mut out = format!("# ride_id={}\n{BUMPINESS_HEADER}\n", series.ride_id);
    for p in &series.points {
        let _ = writeln!(out, "{},{},{},{}", p.ts_ms, fmt_f64(p.lat, 6), fmt_f64(p.lon, 6), fmt_f64(p.b, 0));
    }
    out
}

pub fn parse_bumpiness(text: &str) -> Result<BumpinessSeries, CloudError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let ride_id = match lines.next() {
        Some((_, l)) => l.strip_prefix("# ride_id=").ok_or(CloudError::BadRecord(1))?.to_string(),
        None => return Err(CloudError::BadRecord(1)),
    };
    match lines.next() {
        Some((_, BUMPINESS_HEADER)) => {}
        _ => return Err(CloudError::BadRecord(2)),
    }
    let points = lines
        .map(|(no, l)| {
            let f: Vec<&str> = l.split(',').collect();
            let [ts, lat, lon, b] = f[..] else {
                return Err(CloudError::BadRecord(no));
            };
            let num = |s: &str| s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or(CloudError::BadRecord(no));
            let b = num(b)?;
            if b < 0.0 {
                return Err(CloudError::BadRecord(no));
            }
            Ok(BumpinessPoint {
                ts_ms: ts.parse().map_err(|_| CloudError::BadRecord(no))?,
                lat: num(lat)?,
                lon: num(lon)?,
                b,
            })
        })
        .collect::<Result<_, _>>()?;
    Ok(BumpinessSeries { ride_id, points })
}

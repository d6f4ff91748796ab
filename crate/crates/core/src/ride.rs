//! Ride data model and the `veloqual-ride v1` text format.
//!
//! ```text
//! veloqual-ride v1
//! id=<string>,rate_hz=<int>,downsampled=<0|1>
//! #GPS
//! ts_ms,lat,lon
//! ...
//! #MOTION
//! ts_ms,x,y,z
//! ...
//! ```
//!
//! Numbers are written in their shortest round-tripping decimal form, with
//! latitude and longitude padded to at least six fractional digits, so that
//! `parse_ride(write_ride(r)) == r` holds bit for bit.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::LatLon;

pub const MAGIC: &str = "veloqual-ride v1";
const GPS_MARKER: &str = "#GPS";
const MOTION_MARKER: &str = "#MOTION";

#[derive(Debug, Error, PartialEq)]
pub enum RideError {
    #[error("missing or malformed header")]
    MissingHeader,
    #[error("line {0}: wrong number of fields")]
    BadFieldCount(usize),
    #[error("line {0}: invalid number")]
    BadNumber(usize),
    #[error("line {0}: coordinate out of range")]
    BadCoordinate(usize),
    #[error("line {0}: timestamp not increasing")]
    NonMonotonicTimestamp(usize),
    #[error("ride has no GPS fixes")]
    EmptyRide,
    #[error("input is not valid UTF-8")]
    NotUtf8,
    #[error("cannot crop {head}+{tail} fixes from a ride of {len}")]
    CropTooLarge { head: usize, tail: usize, len: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpsFix {
    pub ts_ms: i64,
    pub lat: f64,
    pub lon: f64,
}

impl GpsFix {
    pub fn new(ts_ms: i64, lat: f64, lon: f64) -> Self {
        Self { ts_ms, lat, lon }
    }

    pub fn pos(&self) -> LatLon {
        LatLon::new(self.lat, self.lon)
    }
}

/// Linear acceleration in device axes. The axis orientation is whatever the
/// phone happened to have; nothing downstream depends on it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionSample {
    pub ts_ms: i64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl MotionSample {
    pub fn new(ts_ms: i64, x: f64, y: f64, z: f64) -> Self {
        Self { ts_ms, x, y, z }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ride {
    pub ride_id: String,
    pub fixes: Vec<GpsFix>,
    pub motion: Vec<MotionSample>,
    pub sample_rate_hz: u32,
    pub downsampled: bool,
}

impl Ride {
    /// Time span covered by the GPS trace, if any.
    pub fn fix_span(&self) -> Option<(i64, i64)> {
        Some((self.fixes.first()?.ts_ms, self.fixes.last()?.ts_ms))
    }

    pub fn duration_ms(&self) -> i64 {
        self.fix_span().map_or(0, |(a, b)| b - a)
    }
}

pub fn parse_ride(bytes: &[u8]) -> Result<Ride, RideError> {
    let text = std::str::from_utf8(bytes).map_err(|_| RideError::NotUtf8)?;
    let mut lines = text.split('\n').enumerate().map(|(i, l)| (i + 1, l)).peekable();

    match lines.next() {
        Some((_, MAGIC)) => {}
        _ => return Err(RideError::MissingHeader),
    }
    let (ride_id, sample_rate_hz, downsampled) = match lines.next() {
        Some((_, line)) => parse_meta(line)?,
        None => return Err(RideError::MissingHeader),
    };
    match lines.next() {
        Some((_, GPS_MARKER)) => {}
        _ => return Err(RideError::MissingHeader),
    }

    let mut fixes: Vec<GpsFix> = Vec::new();
    let mut saw_motion_marker = false;
    while let Some((no, line)) = lines.next() {
        if line.is_empty() && lines.peek().is_none() {
            break;
        }
        if line == MOTION_MARKER {
            saw_motion_marker = true;
            break;
        }
        let [ts, lat, lon] = split_fields::<3>(line, no)?;
        let ts = parse_ts(ts, no)?;
        let lat = parse_f64(lat, no)?;
        let lon = parse_f64(lon, no)?;
        if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
            return Err(RideError::BadCoordinate(no));
        }
        if fixes.last().is_some_and(|f| f.ts_ms >= ts) {
            return Err(RideError::NonMonotonicTimestamp(no));
        }
        fixes.push(GpsFix::new(ts, lat, lon));
    }
    if !saw_motion_marker {
        return Err(RideError::MissingHeader);
    }

    let mut motion: Vec<MotionSample> = Vec::new();
    while let Some((no, line)) = lines.next() {
        // A single trailing newline terminates the file.
        if line.is_empty() && lines.peek().is_none() {
            break;
        }
        let [ts, x, y, z] = split_fields::<4>(line, no)?;
        let ts = parse_ts(ts, no)?;
        let sample = MotionSample::new(ts, parse_f64(x, no)?, parse_f64(y, no)?, parse_f64(z, no)?);
        if motion.last().is_some_and(|m| m.ts_ms > ts) {
            return Err(RideError::NonMonotonicTimestamp(no));
        }
        motion.push(sample);
    }

    if fixes.is_empty() {
        return Err(RideError::EmptyRide);
    }
    Ok(Ride { ride_id, fixes, motion, sample_rate_hz, downsampled })
}

fn parse_meta(line: &str) -> Result<(String, u32, bool), RideError> {
    let rest = line.strip_prefix("id=").ok_or(RideError::MissingHeader)?;
    // The id is opaque and may itself contain commas.
    let mut parts = rest.rsplitn(3, ',');
    let down = parts.next().and_then(|s| s.strip_prefix("downsampled="));
    let rate = parts.next().and_then(|s| s.strip_prefix("rate_hz="));
    let id = parts.next();
    match (id, rate, down) {
        (Some(id), Some(rate), Some(down)) => {
            let rate: u32 = rate.parse().map_err(|_| RideError::MissingHeader)?;
            let down = match down {
                "0" => false,
                "1" => true,
                _ => return Err(RideError::MissingHeader),
            };
            Ok((id.to_string(), rate, down))
        }
        _ => Err(RideError::MissingHeader),
    }
}

fn split_fields<const N: usize>(line: &str, no: usize) -> Result<[&str; N], RideError> {
    let mut out = [""; N];
    let mut it = line.split(',');
    for slot in out.iter_mut() {
        *slot = it.next().ok_or(RideError::BadFieldCount(no))?;
    }
    if it.next().is_some() {
        return Err(RideError::BadFieldCount(no));
    }
    Ok(out)
}

fn parse_ts(s: &str, no: usize) -> Result<i64, RideError> {
    s.parse().map_err(|_| RideError::BadNumber(no))
}

fn parse_f64(s: &str, no: usize) -> Result<f64, RideError> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(RideError::BadNumber(no)),
    }
}

/// Shortest decimal that parses back to exactly `v`, with at least
/// `min_frac` fractional digits.
pub(crate) fn fmt_f64(v: f64, min_frac: usize) -> String {
    let mut s = format!("{v}");
    let frac = match s.find('.') {
        Some(dot) => s.len() - dot - 1,
        None => {
            if min_frac > 0 {
                s.push('.');
            }
            0
        }
    };
    for _ in frac..min_frac {
        s.push('0');
    }
    s
}

pub fn write_ride(ride: &Ride) -> Vec<u8> {
    let mut out = String::with_capacity(64 + 40 * (ride.fixes.len() + ride.motion.len()));
    out.push_str(MAGIC);
    out.push('\n');
    let _ = writeln!(
        out,
        "id={},rate_hz={},downsampled={}",
        ride.ride_id,
        ride.sample_rate_hz,
        u8::from(ride.downsampled)
    );
    out.push_str(GPS_MARKER);
    out.push('\n');
    for f in &ride.fixes {
        let _ = writeln!(out, "{},{},{}", f.ts_ms, fmt_f64(f.lat, 6), fmt_f64(f.lon, 6));
    }
    out.push_str(MOTION_MARKER);
    out.push('\n');
    for m in &ride.motion {
        let _ = writeln!(out, "{},{},{},{}", m.ts_ms, fmt_f64(m.x, 0), fmt_f64(m.y, 0), fmt_f64(m.z, 0));
    }
    out.into_bytes()
}

/// Drops `drop_head` fixes from the start and `drop_tail` from the end, and
/// keeps only motion samples inside the retained fix time range.
pub fn crop_ride(ride: &Ride, drop_head: usize, drop_tail: usize) -> Result<Ride, RideError> {
    let len = ride.fixes.len();
    if drop_head + drop_tail >= len {
        return Err(RideError::CropTooLarge { head: drop_head, tail: drop_tail, len });
    }
    let fixes = ride.fixes[drop_head..len - drop_tail].to_vec();
    let (t0, t1) = (fixes[0].ts_ms, fixes[fixes.len() - 1].ts_ms);
    let motion = ride
        .motion
        .iter()
        .filter(|m| m.ts_ms >= t0 && m.ts_ms <= t1)
        .copied()
        .collect();
    Ok(Ride { fixes, motion, ..ride.clone() })
}

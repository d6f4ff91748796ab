//! On-phone downsampling: trailing moving average followed by decimation,
//! turning 50 Hz motion into the 10 Hz stream the app uploads.

use thiserror::Error;

use crate::params::PipelineParams;
use crate::ride::{MotionSample, Ride};

#[derive(Debug, Error, PartialEq)]
pub enum EdgeError {
    #[error("window must be at least 1")]
    ZeroWindow,
    #[error("window of {window} is longer than the series ({len} samples)")]
    WindowLargerThanSeries { window: usize, len: usize },
    #[error("ride is already downsampled")]
    AlreadyDownsampled,
    #[error("ride is recorded at {found} Hz, expected {expected} Hz")]
    RateMismatch { expected: u32, found: u32 },
}

/// Sums are re-accumulated from scratch this often to bound drift.
const RESYNC_EVERY: usize = 1024;

/// Trailing moving average: `out[i]` is the mean of `series[i..i + window]`,
/// so the output has `len - window + 1` values.
pub fn moving_average(series: &[f64], window: usize) -> Result<Vec<f64>, EdgeError> {
    if window == 0 {
        return Err(EdgeError::ZeroWindow);
    }
    if window > series.len() {
        return Err(EdgeError::WindowLargerThanSeries { window, len: series.len() });
    }
    let n_out = series.len() - window + 1;
    let w = window as f64;
    let mut out = Vec::with_capacity(n_out);
    let mut sum: f64 = series[..window].iter().sum();
    out.push(sum / w);
    for i in 1..n_out {
        if i % RESYNC_EVERY == 0 {
            sum = series[i..i + window].iter().sum();
        } else {
            sum += series[i + window - 1] - series[i - 1];
        }
        out.push(sum / w);
    }
    Ok(out)
}

/// Keeps `series[0]`, `series[k]`, `series[2k]`, ...
pub fn decimate<T: Clone>(series: &[T], keep_every: usize) -> Result<Vec<T>, EdgeError> {
    if keep_every == 0 {
        return Err(EdgeError::ZeroWindow);
    }
    Ok(series.iter().step_by(keep_every).cloned().collect())
}

fn smooth_axis(values: Vec<f64>, params: &PipelineParams) -> Result<Vec<f64>, EdgeError> {
    decimate(&moving_average(&values, params.ma_window)?, params.keep_every)
}

/// Applies the moving average and decimation to each axis. Each output sample
/// carries the timestamp of the newest raw sample in its window.
pub fn downsample_ride(ride: &Ride, params: &PipelineParams) -> Result<Ride, EdgeError> {
    if ride.downsampled {
        return Err(EdgeError::AlreadyDownsampled);
    }
    if ride.sample_rate_hz != params.raw_rate_hz {
        return Err(EdgeError::RateMismatch { expected: params.raw_rate_hz, found: ride.sample_rate_hz });
    }
    let m = &ride.motion;
    let xs = smooth_axis(m.iter().map(|s| s.x).collect(), params)?;
    let ys = smooth_axis(m.iter().map(|s| s.y).collect(), params)?;
    let zs = smooth_axis(m.iter().map(|s| s.z).collect(), params)?;
    let ts = decimate(&m[params.ma_window - 1..], params.keep_every)?;
    let motion = ts
        .iter()
        .zip(xs.into_iter().zip(ys).zip(zs))
        .map(|(s, ((x, y), z))| MotionSample::new(s.ts_ms, x, y, z))
        .collect();
    Ok(Ride {
        ride_id: ride.ride_id.clone(),
        fixes: ride.fixes.clone(),
        motion,
        sample_rate_hz: params.downsampled_rate_hz(),
        downsampled: true,
    })
}

//! Synthetic rides over streets with known roughness.
//!
//! Each surface class has a base variance of per-axis acceleration noise.
//! Riders differ in speed and in device gain (a multiplier on every axis, as
//! different phones and mounts would produce), may stop at junctions, and
//! carry temporally correlated GPS error. The full pipeline can then be run on
//! the generated crowd and compared against the ground truth.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cloud::{preprocess_ride, CloudError};
use crate::geo::{cell_polygon, project, ring_centroid, unproject, LatLon, LocalXY};
use crate::params::PipelineParams;
use crate::pipeline::grid_from_series;
use crate::quality::{QualityError, SurfaceGrid};
use crate::ride::{GpsFix, MotionSample, Ride};

pub const GPS_INTERVAL_MS: i64 = 3000;
pub const RAW_INTERVAL_MS: i64 = 20;
const BASE_EPOCH_MS: i64 = 1_700_000_000_000;
/// Street ends closer than this are considered connected.
const JOIN_TOLERANCE_M: f64 = 1.0;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("streets {0} and {1} of the route do not connect")]
    DisconnectedRoute(usize, usize),
    #[error("route references unknown street {0}")]
    UnknownStreet(usize),
    #[error("world is invalid: {0}")]
    InvalidWorld(String),
    #[error("ride {ride}: {source}")]
    Pipeline { ride: String, source: CloudError },
    #[error(transparent)]
    Quality(#[from] QualityError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceClass {
    Asphalt,
    PavingStones,
    FineGravel,
    Cobblestones,
}

impl SurfaceClass {
    pub const ALL: [SurfaceClass; 4] =
        [Self::Asphalt, Self::PavingStones, Self::FineGravel, Self::Cobblestones];

    /// Variance of per-axis acceleration noise, arbitrary units.
    pub fn roughness(self) -> f64 {
        match self {
            Self::Asphalt => 0.05,
            Self::PavingStones => 0.20,
            Self::FineGravel => 0.25,
            Self::Cobblestones => 1.00,
        }
    }
}

/// A second lane along the same street, taken by a share of the riders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lane {
    pub surface: SurfaceClass,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Street {
    #[serde(default)]
    pub name: String,
    /// `[lat, lon]` vertices.
    pub polyline: Vec<LatLon>,
    pub surface: SurfaceClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alternate: Option<Lane>,
}

fn default_noise() -> f64 {
    3.0
}
fn default_corr() -> f64 {
    0.95
}
fn default_speed() -> [f64; 2] {
    [12.0, 22.0]
}
fn default_gain() -> [f64; 2] {
    [0.5, 2.0]
}
fn default_stop_seconds() -> f64 {
    120.0
}
fn default_stop_roughness() -> f64 {
    0.02
}
fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticWorld {
    pub streets: Vec<Street>,
    /// Street index sequences rides may follow; empty means all streets in
    /// order. Each ride picks one uniformly and rides it in either direction.
    #[serde(default)]
    pub routes: Vec<Vec<usize>>,
    /// Marginal standard deviation of the GPS error, meters.
    #[serde(default = "default_noise")]
    pub gps_noise_m: f64,
    /// Correlation of the GPS error between consecutive fixes.
    #[serde(default = "default_corr")]
    pub gps_noise_correlation: f64,
    #[serde(default = "default_speed")]
    pub speed_kmh: [f64; 2],
    /// Device gain is drawn log-uniformly from this range.
    #[serde(default = "default_gain")]
    pub device_gain: [f64; 2],
    #[serde(default)]
    pub stop_probability: f64,
    #[serde(default = "default_stop_seconds")]
    pub stop_seconds: f64,
    /// Noise variance while standing still.
    #[serde(default = "default_stop_roughness")]
    pub stop_roughness: f64,
    /// Multiplies every class roughness and the stop roughness.
    #[serde(default = "one")]
    pub roughness_scale: f64,
}

impl SyntheticWorld {
    pub fn new(streets: Vec<Street>) -> Self {
        Self {
            streets,
            routes: Vec::new(),
            gps_noise_m: default_noise(),
            gps_noise_correlation: default_corr(),
            speed_kmh: default_speed(),
            device_gain: default_gain(),
            stop_probability: 0.0,
            stop_seconds: default_stop_seconds(),
            stop_roughness: default_stop_roughness(),
            roughness_scale: 1.0,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, SynthError> {
        let w: Self = serde_json::from_str(text).map_err(|e| SynthError::InvalidWorld(e.to_string()))?;
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidWorld(m.to_string()));
        if self.streets.is_empty() {
            return bad("no streets");
        }
        if self.streets.iter().any(|s| s.polyline.len() < 2) {
            return bad("every street needs at least two vertices");
        }
        if self.streets.iter().filter_map(|s| s.alternate.as_ref()).any(|l| !(0.0..=1.0).contains(&l.share)) {
            return bad("lane share must be within [0, 1]");
        }
        if !(self.speed_kmh[0] > 0.0 && self.speed_kmh[0] <= self.speed_kmh[1]) {
            return bad("speed range must be positive and ordered");
        }
        if !(self.device_gain[0] > 0.0 && self.device_gain[0] <= self.device_gain[1]) {
            return bad("device gain range must be positive and ordered");
        }
        if !(0.0..1.0).contains(&self.gps_noise_correlation) || self.gps_noise_m < 0.0 {
            return bad("GPS noise must be non-negative with correlation in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.stop_probability) || self.stop_seconds < 0.0 {
            return bad("stop probability must be within [0, 1] and duration non-negative");
        }
        if self.roughness_scale < 0.0 || self.stop_roughness < 0.0 {
            return bad("roughness must be non-negative");
        }
        for r in self.route_list() {
            if r.is_empty() {
                return bad("empty route");
            }
            self.route_geometry(&r)?;
        }
        Ok(())
    }

    fn route_list(&self) -> Vec<Vec<usize>> {
        if self.routes.is_empty() {
            vec![(0..self.streets.len()).collect()]
        } else {
            self.routes.clone()
        }
    }

    /// Street polylines of `route`, each oriented so it starts where the
    /// previous one ended.
    fn route_geometry(&self, route: &[usize]) -> Result<Vec<(usize, Vec<LatLon>)>, SynthError> {
        let street = |i: usize| self.streets.get(i).ok_or(SynthError::UnknownStreet(i));
        let near = |a: LatLon, b: LatLon| crate::geo::haversine_m(a, b) <= JOIN_TOLERANCE_M;
        let mut out: Vec<(usize, Vec<LatLon>)> = Vec::with_capacity(route.len());
        for (k, &si) in route.iter().enumerate() {
            let mut poly = street(si)?.polyline.clone();
            match out.last() {
                None => {
                    if let Some(&next) = route.get(1) {
                        let np = &street(next)?.polyline;
                        let (first, last) = (np[0], np[np.len() - 1]);
                        let end = poly[poly.len() - 1];
                        if !near(end, first) && !near(end, last) {
                            poly.reverse();
                        }
                    }
                }
                Some((prev, prev_poly)) => {
                    let end = prev_poly[prev_poly.len() - 1];
                    if near(poly[poly.len() - 1], end) {
                        poly.reverse();
                    }
                    if !near(poly[0], end) {
                        return Err(SynthError::DisconnectedRoute(*prev, route[k]));
                    }
                }
            }
            out.push((si, poly));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiderProfile {
    pub device_gain: f64,
    pub speed_kmh: f64,
    pub stop_probability: f64,
}

impl RiderProfile {
    pub fn draw<R: Rng>(world: &SyntheticWorld, rng: &mut R) -> Self {
        let [g0, g1] = world.device_gain;
        let u: f64 = rng.random();
        let [s0, s1] = world.speed_kmh;
        let v: f64 = rng.random();
        Self {
            device_gain: (g0.ln() + u * (g1.ln() - g0.ln())).exp(),
            speed_kmh: s0 + v * (s1 - s0),
            stop_probability: world.stop_probability,
        }
    }
}

/// Piece of the rider's timeline.
#[derive(Debug, Clone, Copy)]
enum Phase {
    Move { t0: f64, t1: f64, d0: f64, d1: f64 },
    Stop { t1: f64, d: f64 },
}

/// Route flattened into one local-metric polyline with per-street spans.
struct Track {
    origin: LatLon,
    vertices: Vec<LocalXY>,
    cum: Vec<f64>,
    /// (start distance, roughness) per street, in route order.
    spans: Vec<(f64, f64)>,
    junctions: Vec<f64>,
}

impl Track {
    fn length(&self) -> f64 {
        self.cum[self.cum.len() - 1]
    }

    fn at(&self, d: f64) -> LocalXY {
        let i = self.cum.partition_point(|&c| c <= d).clamp(1, self.cum.len() - 1);
        let (a, b) = (self.vertices[i - 1], self.vertices[i]);
        let seg = self.cum[i] - self.cum[i - 1];
        let t = if seg > 0.0 { ((d - self.cum[i - 1]) / seg).clamp(0.0, 1.0) } else { 0.0 };
        LocalXY { x: a.x + t * (b.x - a.x), y: a.y + t * (b.y - a.y) }
    }

    fn roughness(&self, d: f64) -> f64 {
        let i = self.spans.partition_point(|(start, _)| *start <= d).max(1);
        self.spans[i - 1].1
    }
}

fn position_on(phases: &[Phase], t: f64) -> (f64, bool) {
    let i = phases.partition_point(|p| match p {
        Phase::Move { t1, .. } | Phase::Stop { t1, .. } => *t1 < t,
    });
    match phases.get(i).or(phases.last()) {
        Some(Phase::Move { t0, t1, d0, d1 }) => {
            let w = if t1 > t0 { ((t - t0) / (t1 - t0)).clamp(0.0, 1.0) } else { 1.0 };
            (d0 + w * (d1 - d0), false)
        }
        Some(Phase::Stop { d, .. }) => (*d, true),
        None => (0.0, false),
    }
}

fn ride_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 over (seed, index)
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generates one raw 50 Hz ride along `route`. Deterministic in `seed`.
pub fn generate_ride(
    world: &SyntheticWorld,
    profile: &RiderProfile,
    route: &[usize],
    ride_id: &str,
    seed: u64,
) -> Result<Ride, SynthError> {
    let geometry = world.route_geometry(route)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let origin = geometry[0].1[0];
    let mut vertices: Vec<LocalXY> = Vec::new();
    let mut spans = Vec::new();
    let mut junctions = Vec::new();
    let mut cum: Vec<f64> = Vec::new();
    for (k, (si, poly)) in geometry.iter().enumerate() {
        let street = &world.streets[*si];
        let surface = match &street.alternate {
            Some(lane) if rng.random::<f64>() < lane.share => lane.surface,
            _ => street.surface,
        };
        let start = cum.last().copied().unwrap_or(0.0);
        spans.push((start, surface.roughness() * world.roughness_scale));
        if k > 0 {
            junctions.push(start);
        }
        let skip = usize::from(k > 0);
        for p in &poly[skip..] {
            let xy = project(*p, origin).map_err(|_| SynthError::InvalidWorld("route spans more than 1°".into()))?;
            let d = match (vertices.last(), cum.last()) {
                (Some(v), Some(c)) => c + ((xy.x - v.x).powi(2) + (xy.y - v.y).powi(2)).sqrt(),
                _ => 0.0,
            };
            vertices.push(xy);
            cum.push(d);
        }
    }
    let track = Track { origin, vertices, cum, spans, junctions };

    let speed = profile.speed_kmh / 3.6;
    let mut phases = Vec::new();
    let (mut t, mut d) = (0.0, 0.0);
    for &j in &track.junctions {
        phases.push(Phase::Move { t0: t, t1: t + (j - d) / speed, d0: d, d1: j });
        t += (j - d) / speed;
        d = j;
        if rng.random::<f64>() < profile.stop_probability {
            phases.push(Phase::Stop { t1: t + world.stop_seconds, d });
            t += world.stop_seconds;
        }
    }
    let end = track.length();
    phases.push(Phase::Move { t0: t, t1: t + (end - d) / speed, d0: d, d1: end });
    let total_ms = ((t + (end - d) / speed) * 1000.0).round() as i64;

    let start_ms = BASE_EPOCH_MS + (seed % 1_000_000) as i64 * 1000;
    let (sigma, rho) = (world.gps_noise_m, world.gps_noise_correlation);
    let innovation = sigma * (1.0 - rho * rho).sqrt();
    let mut err = (sigma * rng.sample::<f64, _>(StandardNormal), sigma * rng.sample::<f64, _>(StandardNormal));
    let mut fixes = Vec::new();
    let mut ts = 0;
    while ts <= total_ms {
        let (dist, _) = position_on(&phases, ts as f64 / 1000.0);
        let p = track.at(dist);
        let pos = unproject(LocalXY { x: p.x + err.0, y: p.y + err.1 }, track.origin);
        fixes.push(GpsFix::new(start_ms + ts, pos.lat, pos.lon));
        err = (
            rho * err.0 + innovation * rng.sample::<f64, _>(StandardNormal),
            rho * err.1 + innovation * rng.sample::<f64, _>(StandardNormal),
        );
        ts += GPS_INTERVAL_MS;
    }
    // close the track with a fix at the very end
    if fixes.last().is_some_and(|f| f.ts_ms < start_ms + total_ms) {
        let p = track.at(end);
        let pos = unproject(LocalXY { x: p.x + err.0, y: p.y + err.1 }, track.origin);
        fixes.push(GpsFix::new(start_ms + total_ms, pos.lat, pos.lon));
    }

    let stop_var = world.stop_roughness * world.roughness_scale;
    let mut motion = Vec::with_capacity((total_ms / RAW_INTERVAL_MS + 1) as usize);
    let mut ts = 0;
    while ts <= total_ms {
        let (dist, stopped) = position_on(&phases, ts as f64 / 1000.0);
        let var = if stopped { stop_var } else { track.roughness(dist) };
        let s = var.sqrt() * profile.device_gain;
        let mut axis = || s * rng.sample::<f64, _>(StandardNormal);
        let (x, y, z) = (axis(), axis(), axis());
        motion.push(MotionSample::new(start_ms + ts, x, y, z));
        ts += RAW_INTERVAL_MS;
    }

    Ok(Ride { ride_id: ride_id.to_string(), fixes, motion, sample_rate_hz: 50, downsampled: false })
}

/// Ride `index` of an experiment: profile, route and direction are drawn from
/// a seed derived from `(seed, index)`, independent of every other ride.
pub fn experiment_ride(world: &SyntheticWorld, seed: u64, index: usize) -> Result<Ride, SynthError> {
    let mut rng = ChaCha8Rng::seed_from_u64(ride_seed(seed, 2 * index as u64));
    let profile = RiderProfile::draw(world, &mut rng);
    let routes = world.route_list();
    let mut route = routes[rng.random_range(0..routes.len())].clone();
    if rng.random::<bool>() {
        route.reverse();
    }
    let id = format!("synth-{seed}-{index:05}");
    generate_ride(world, &profile, &route, &id, ride_seed(seed, 2 * index as u64 + 1))
}

/// Generates `n_rides` rides and runs the whole pipeline on them.
pub fn run_experiment(
    world: &SyntheticWorld,
    n_rides: usize,
    seed: u64,
    params: &PipelineParams,
) -> Result<SurfaceGrid, SynthError> {
    world.validate()?;
    let series = (0..n_rides)
        .into_par_iter()
        .map(|i| {
            let ride = experiment_ride(world, seed, i)?;
            preprocess_ride(&ride, params).map_err(|source| SynthError::Pipeline { ride: ride.ride_id.clone(), source })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(grid_from_series(&series, params)?.grid)
}

/// Cells whose centre lies within `max_offset_m` of the street's polyline
/// and at least `end_margin_m` (along the street) from either end.
pub fn street_cells(
    world: &SyntheticWorld,
    street: usize,
    grid: &SurfaceGrid,
    max_offset_m: f64,
    end_margin_m: f64,
) -> Vec<crate::geo::CellIndex> {
    let poly = &world.streets[street].polyline;
    let origin = poly[0];
    let Ok(xy) = poly.iter().map(|p| project(*p, origin)).collect::<Result<Vec<_>, _>>() else {
        return Vec::new();
    };
    let total: f64 = xy.windows(2).map(|w| ((w[1].x - w[0].x).powi(2) + (w[1].y - w[0].y).powi(2)).sqrt()).sum();
    grid.cells
        .keys()
        .filter(|idx| {
            let Ok(ring) = cell_polygon(**idx, &grid.params) else { return false };
            let Ok(c) = project(ring_centroid(&ring), origin) else { return false };
            let (offset, along) = nearest_on_polyline(&xy, c);
            offset <= max_offset_m && along >= end_margin_m && along <= total - end_margin_m
        })
        .copied()
        .collect()
}

/// Distance from `p` to the polyline and the along-track distance of the
/// closest point.
fn nearest_on_polyline(xy: &[LocalXY], p: LocalXY) -> (f64, f64) {
    let mut best = (f64::INFINITY, 0.0);
    let mut walked = 0.0;
    for w in xy.windows(2) {
        let (dx, dy) = (w[1].x - w[0].x, w[1].y - w[0].y);
        let len2 = dx * dx + dy * dy;
        let t = if len2 > 0.0 { (((p.x - w[0].x) * dx + (p.y - w[0].y) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
        let (qx, qy) = (w[0].x + t * dx, w[0].y + t * dy);
        let dist = ((p.x - qx).powi(2) + (p.y - qy).powi(2)).sqrt();
        if dist < best.0 {
            best = (dist, walked + t * len2.sqrt());
        }
        walked += len2.sqrt();
    }
    best
}

/// Mean cell quality per surface class over single-lane streets, using
/// [`street_cells`] with a 15 m offset and 30 m end margin.
pub fn class_qualities(world: &SyntheticWorld, grid: &SurfaceGrid) -> BTreeMap<SurfaceClass, f64> {
    let mut acc: BTreeMap<SurfaceClass, (f64, usize)> = BTreeMap::new();
    for (i, street) in world.streets.iter().enumerate() {
        if street.alternate.is_some() {
            continue;
        }
        for idx in street_cells(world, i, grid, 15.0, 30.0) {
            if let Some(q) = grid.cell_quality(idx) {
                let e = acc.entry(street.surface).or_default();
                e.0 += q;
                e.1 += 1;
            }
        }
    }
    acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
}

/// Straight streets of `length_m` laid end to end eastwards from `origin`,
/// one per entry of `surfaces`.
pub fn chain_world(origin: LatLon, surfaces: &[SurfaceClass], length_m: f64) -> SyntheticWorld {
    let streets = surfaces
        .iter()
        .enumerate()
        .map(|(i, s)| Street {
            name: format!("street-{i}"),
            polyline: vec![
                unproject(LocalXY { x: i as f64 * length_m, y: 0.0 }, origin),
                unproject(LocalXY { x: (i + 1) as f64 * length_m, y: 0.0 }, origin),
            ],
            surface: *s,
            alternate: None,
        })
        .collect();
    SyntheticWorld::new(streets)
}

//! Distances, the local metric projection and the square cell grid.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::params::{ParamsError, PipelineParams};
use crate::ride::GpsFix;

pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Largest latitude or longitude offset from the origin the equirectangular
/// projection is used for.
pub const MAX_LOCAL_OFFSET_DEG: f64 = 1.0;

#[derive(Debug, Error, PartialEq)]
pub enum GeoError {
    #[error("point is more than {MAX_LOCAL_OFFSET_DEG}° away from the grid origin")]
    OutOfLocalRange,
    #[error("timestamp {0} outside the GPS trace")]
    OutOfTimeRange(i64),
    #[error(transparent)]
    Params(#[from] ParamsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub const fn new(lat: f64, lon: f64) -> Self {
        Self { lat, lon }
    }
}

/// Meters east (`x`) and north (`y`) of a projection origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalXY {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellIndex {
    pub ix: i64,
    pub iy: i64,
}

impl CellIndex {
    pub const fn new(ix: i64, iy: i64) -> Self {
        Self { ix, iy }
    }

    /// `"ix:iy"`, the key used in grid snapshots and GeoJSON feature ids.
    pub fn key(&self) -> String {
        format!("{}:{}", self.ix, self.iy)
    }

    pub fn parse_key(s: &str) -> Option<Self> {
        let (a, b) = s.split_once(':')?;
        Some(Self::new(a.parse().ok()?, b.parse().ok()?))
    }
}

/// Great-circle distance on a sphere of radius [`EARTH_RADIUS_M`].
pub fn haversine_m(a: LatLon, b: LatLon) -> f64 {
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let dphi = phi2 - phi1;
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

pub fn project(p: LatLon, origin: LatLon) -> Result<LocalXY, GeoError> {
    let dlat = p.lat - origin.lat;
    let dlon = p.lon - origin.lon;
    if !(dlat.abs() < MAX_LOCAL_OFFSET_DEG && dlon.abs() < MAX_LOCAL_OFFSET_DEG) {
        return Err(GeoError::OutOfLocalRange);
    }
    Ok(LocalXY {
        x: EARTH_RADIUS_M * dlon.to_radians() * origin.lat.to_radians().cos(),
        y: EARTH_RADIUS_M * dlat.to_radians(),
    })
}

pub fn unproject(xy: LocalXY, origin: LatLon) -> LatLon {
    LatLon {
        lat: origin.lat + (xy.y / EARTH_RADIUS_M).to_degrees(),
        lon: origin.lon + (xy.x / (EARTH_RADIUS_M * origin.lat.to_radians().cos())).to_degrees(),
    }
}

pub fn cell_of_xy(xy: LocalXY, cell_size_m: f64) -> CellIndex {
    CellIndex::new((xy.x / cell_size_m).floor() as i64, (xy.y / cell_size_m).floor() as i64)
}

pub fn cell_of(p: LatLon, params: &PipelineParams) -> Result<CellIndex, GeoError> {
    let xy = project(p, params.origin()?)?;
    Ok(cell_of_xy(xy, params.cell_size_m))
}

/// Grid corner `(i, j)` in lat/lon. Adjacent cells compute shared corners
/// through this same call, so they agree bit for bit.
fn grid_corner(i: i64, j: i64, cell_size_m: f64, origin: LatLon) -> LatLon {
    unproject(LocalXY { x: i as f64 * cell_size_m, y: j as f64 * cell_size_m }, origin)
}

/// Closed counter-clockwise ring: SW, SE, NE, NW, SW.
pub fn cell_polygon(c: CellIndex, params: &PipelineParams) -> Result<[LatLon; 5], GeoError> {
    let origin = params.origin()?;
    let s = params.cell_size_m;
    let sw = grid_corner(c.ix, c.iy, s, origin);
    Ok([
        sw,
        grid_corner(c.ix + 1, c.iy, s, origin),
        grid_corner(c.ix + 1, c.iy + 1, s, origin),
        grid_corner(c.ix, c.iy + 1, s, origin),
        sw,
    ])
}

/// Mean of the four distinct corners of a cell ring.
pub fn ring_centroid(ring: &[LatLon; 5]) -> LatLon {
    let (lat, lon) = ring[..4].iter().fold((0.0, 0.0), |(a, b), p| (a + p.lat, b + p.lon));
    LatLon::new(lat / 4.0, lon / 4.0)
}

/// Position at time `t` by linear interpolation between the bracketing fixes.
pub fn position_at(fixes: &[GpsFix], t: i64) -> Result<LatLon, GeoError> {
    let (first, last) = match (fixes.first(), fixes.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(GeoError::OutOfTimeRange(t)),
    };
    if t < first.ts_ms || t > last.ts_ms {
        return Err(GeoError::OutOfTimeRange(t));
    }
    let i = fixes.partition_point(|f| f.ts_ms <= t);
    let a = &fixes[i - 1];
    if a.ts_ms == t || i == fixes.len() {
        return Ok(a.pos());
    }
    let b = &fixes[i];
    let w = (t - a.ts_ms) as f64 / (b.ts_ms - a.ts_ms) as f64;
    Ok(LatLon::new(a.lat + w * (b.lat - a.lat), a.lon + w * (b.lon - a.lon)))
}

/// Axis-aligned lat/lon rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub min_lon: f64,
    pub min_lat: f64,
    pub max_lon: f64,
    pub max_lat: f64,
}

impl BBox {
    /// Parses `minLon,minLat,maxLon,maxLat`.
    pub fn parse(s: &str) -> Option<Self> {
        let v: Vec<f64> = s.split(',').map(|p| p.trim().parse().ok()).collect::<Option<_>>()?;
        let [min_lon, min_lat, max_lon, max_lat] = v[..] else {
            return None;
        };
        let b = Self { min_lon, min_lat, max_lon, max_lat };
        b.is_valid().then_some(b)
    }

    pub fn is_valid(&self) -> bool {
        let all = [self.min_lon, self.min_lat, self.max_lon, self.max_lat];
        all.iter().all(|v| v.is_finite())
            && self.min_lon <= self.max_lon
            && self.min_lat <= self.max_lat
            && self.min_lat >= -90.0
            && self.max_lat <= 90.0
            && self.min_lon >= -180.0
            && self.max_lon <= 180.0
    }

    pub fn of_points<'a, I: IntoIterator<Item = &'a LatLon>>(points: I) -> Self {
        points.into_iter().fold(
            Self {
                min_lon: f64::INFINITY,
                min_lat: f64::INFINITY,
                max_lon: f64::NEG_INFINITY,
                max_lat: f64::NEG_INFINITY,
            },
            |b, p| Self {
                min_lon: b.min_lon.min(p.lon),
                min_lat: b.min_lat.min(p.lat),
                max_lon: b.max_lon.max(p.lon),
                max_lat: b.max_lat.max(p.lat),
            },
        )
    }

    /// Closed-interval overlap test.
    pub fn intersects(&self, other: &BBox) -> bool {
        self.min_lon <= other.max_lon
            && other.min_lon <= self.max_lon
            && self.min_lat <= other.max_lat
            && other.min_lat <= self.max_lat
    }

    /// Approximate area in km², using the width at the middle latitude.
    pub fn area_km2(&self) -> f64 {
        let mid = ((self.min_lat + self.max_lat) / 2.0).to_radians();
        let w = EARTH_RADIUS_M * (self.max_lon - self.min_lon).to_radians() * mid.cos();
        let h = EARTH_RADIUS_M * (self.max_lat - self.min_lat).to_radians();
        w * h / 1e6
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const BERLIN: LatLon = LatLon::new(52.52, 13.405);

    fn params() -> PipelineParams {
        PipelineParams::default().with_origin(BERLIN)
    }

    /// Central angle from the chord between unit vectors, independent of the
    /// haversine form.
    fn chord_oracle_m(a: LatLon, b: LatLon) -> f64 {
        let v = |p: LatLon| {
            let (phi, lam) = (p.lat.to_radians(), p.lon.to_radians());
            [phi.cos() * lam.cos(), phi.cos() * lam.sin(), phi.sin()]
        };
        let (u, w) = (v(a), v(b));
        let chord = ((u[0] - w[0]).powi(2) + (u[1] - w[1]).powi(2) + (u[2] - w[2]).powi(2)).sqrt();
        EARTH_RADIUS_M * 2.0 * (chord / 2.0).asin()
    }

    #[test]
    fn haversine_known_pair() {
        // Frozen from the chord oracle above: 94.72454 m
        let d = haversine_m(LatLon::new(52.52, 13.405), LatLon::new(52.52, 13.4064));
        let oracle = chord_oracle_m(LatLon::new(52.52, 13.405), LatLon::new(52.52, 13.4064));
        assert!(((d - oracle) / oracle).abs() < 1e-6, "{d} vs {oracle}");
        assert!((d - 94.72454).abs() < 1e-4, "{d}");
        assert_eq!(haversine_m(BERLIN, BERLIN), 0.0);
    }

    #[test]
    fn projection_basics() {
        let o = project(BERLIN, BERLIN).unwrap();
        assert_eq!((o.x, o.y), (0.0, 0.0));
        let north = project(LatLon::new(52.53, 13.405), BERLIN).unwrap();
        assert_eq!(north.x, 0.0);
        assert!(north.y > 0.0);
        assert_eq!(project(LatLon::new(53.6, 13.405), BERLIN), Err(GeoError::OutOfLocalRange));
    }

    #[test]
    fn cell_floor_rule() {
        assert_eq!(cell_of(BERLIN, &params()).unwrap(), CellIndex::new(0, 0));
        assert_eq!(cell_of_xy(LocalXY { x: 10.0, y: -0.1 }, 10.0), CellIndex::new(1, -1));
        assert_eq!(cell_of(BERLIN, &PipelineParams::default()), Err(GeoError::Params(ParamsError::MissingOrigin)));
    }

    #[test]
    fn points_three_meters_apart_share_a_cell() {
        let p = params();
        let a = unproject(LocalXY { x: 23.0, y: 41.0 }, BERLIN);
        let b = unproject(LocalXY { x: 26.0, y: 41.0 }, BERLIN);
        assert!((haversine_m(a, b) - 3.0).abs() < 1e-3);
        assert_eq!(cell_of(a, &p).unwrap(), CellIndex::new(2, 4));
        assert_eq!(cell_of(b, &p).unwrap(), CellIndex::new(2, 4));
    }

    #[test]
    fn polygon_ring_shape() {
        let p = params();
        let ring = cell_polygon(CellIndex::new(0, 0), &p).unwrap();
        assert_eq!(ring[0], BERLIN);
        assert_eq!(ring.len(), 5);
        assert_eq!(ring[0], ring[4]);
        // counter-clockwise: positive shoelace area in (lon, lat)
        let area: f64 = ring.windows(2).map(|w| w[0].lon * w[1].lat - w[1].lon * w[0].lat).sum();
        assert!(area > 0.0);
    }

    #[test]
    fn adjacent_polygons_share_corners_exactly() {
        let p = params();
        let a = cell_polygon(CellIndex::new(3, -2), &p).unwrap();
        let east = cell_polygon(CellIndex::new(4, -2), &p).unwrap();
        let north = cell_polygon(CellIndex::new(3, -1), &p).unwrap();
        assert_eq!(a[1], east[0]);
        assert_eq!(a[2], east[3]);
        assert_eq!(a[3], north[0]);
        assert_eq!(a[2], north[1]);
    }

    #[test]
    fn position_interpolation() {
        let fixes = [GpsFix::new(0, 52.0, 13.0), GpsFix::new(3000, 52.0004, 13.0008), GpsFix::new(6000, 52.001, 13.001)];
        assert_eq!(position_at(&fixes, 3000).unwrap(), fixes[1].pos());
        assert_eq!(position_at(&fixes, 6000).unwrap(), fixes[2].pos());
        let mid = position_at(&fixes, 1500).unwrap();
        assert!((mid.lat - 52.0002).abs() < 1e-12 && (mid.lon - 13.0004).abs() < 1e-12);
        // quarter span: 0.75·a + 0.25·b
        let q = position_at(&fixes, 3750).unwrap();
        assert!((q.lat - (0.75 * 52.0004 + 0.25 * 52.001)).abs() < 1e-12);
        assert!((q.lon - (0.75 * 13.0008 + 0.25 * 13.001)).abs() < 1e-12);
        assert_eq!(position_at(&fixes, -1), Err(GeoError::OutOfTimeRange(-1)));
        assert_eq!(position_at(&fixes, 6001), Err(GeoError::OutOfTimeRange(6001)));
        assert_eq!(position_at(&[], 0), Err(GeoError::OutOfTimeRange(0)));
    }

    #[test]
    fn bbox_parsing() {
        assert!(BBox::parse("a,b").is_none());
        assert!(BBox::parse("13.4,52.5,13.3,52.6").is_none());
        let b = BBox::parse("13.4,52.5,13.41,52.51").unwrap();
        assert!((b.area_km2() - 0.68 * 1.11).abs() < 0.02);
    }

    fn arb_local() -> impl Strategy<Value = LocalXY> {
        (-3500.0f64..3500.0, -3500.0f64..3500.0).prop_map(|(x, y)| LocalXY { x, y })
    }

    proptest! {
        #[test]
        fn unproject_then_project_is_identity(xy in arb_local()) {
            let o = LatLon::new(52.5, 13.4);
            let back = project(unproject(xy, o), o).unwrap();
            prop_assert!((back.x - xy.x).abs() < 1e-6 && (back.y - xy.y).abs() < 1e-6);
        }

        #[test]
        fn haversine_symmetric(a in (-80.0f64..80.0, -179.0f64..179.0), b in (-80.0f64..80.0, -179.0f64..179.0)) {
            let (a, b) = (LatLon::new(a.0, a.1), LatLon::new(b.0, b.1));
            prop_assert_eq!(haversine_m(a, b), haversine_m(b, a));
            prop_assert!(haversine_m(a, b) >= 0.0);
        }

        #[test]
        fn projection_distance_from_origin_matches_haversine(r in 1.0f64..5000.0, theta in 0.0f64..std::f64::consts::TAU) {
            let xy = LocalXY { x: r * theta.cos(), y: r * theta.sin() };
            let sphere = haversine_m(BERLIN, unproject(xy, BERLIN));
            let rel = ((r - sphere) / sphere).abs();
            // equirectangular error grows linearly with distance at this latitude
            let tol = if r <= 2000.0 { 1e-4 } else { 2.5e-4 };
            prop_assert!(rel < tol, "r={} rel={}", r, rel);
        }

        #[test]
        fn centroid_maps_back(ix in -400i64..400, iy in -400i64..400) {
            let p = params();
            let c = CellIndex::new(ix, iy);
            prop_assert_eq!(cell_of(ring_centroid(&cell_polygon(c, &p).unwrap()), &p).unwrap(), c);
        }

        #[test]
        fn shifting_east_by_one_cell(x in -2000.0f64..2000.0, y in -2000.0f64..2000.0) {
            let a = cell_of_xy(LocalXY { x, y }, 10.0);
            let b = cell_of_xy(LocalXY { x: x + 10.0, y }, 10.0);
            // exact unless x + 10 rounds across a boundary
            prop_assume!(((x + 10.0) - 10.0) == x);
            prop_assert_eq!(b.ix, a.ix + 1);
            prop_assert_eq!(b.iy, a.iy);
        }

        #[test]
        fn position_monotone(t1 in 0i64..6000, t2 in 0i64..6000) {
            let fixes = [GpsFix::new(0, 52.0, 13.0), GpsFix::new(3000, 52.0004, 13.0008), GpsFix::new(6000, 52.001, 13.001)];
            let (lo, hi) = (t1.min(t2), t1.max(t2));
            let (a, b) = (position_at(&fixes, lo).unwrap(), position_at(&fixes, hi).unwrap());
            prop_assert!(a.lat <= b.lat && a.lon <= b.lon);
        }
    }
}

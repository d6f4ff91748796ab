//! HTTP front end: grid cells as GeoJSON, quality-aware routes and ride upload.
//!
//! Readers take the current [`Snapshot`] (an `Arc` swapped under a short
//! lock) and never wait for the pipeline. Uploads are serialized by a single
//! writer lock, run the pipeline on a copy of the grid, persist it and then
//! publish the new snapshot.

pub mod config;
pub mod store;

use std::collections::{BTreeSet, HashMap};
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Json;
use serde_json::json;
use thiserror::Error;
use tower_http::cors::{Any, CorsLayer};
use tower_http::services::ServeDir;
use veloqual_core::geo::cell_of;
use veloqual_core::routing::{RouteRequest, MAX_SLIDER};
use veloqual_core::{
    export, parse_ride, preprocess_ride, quantize_ride, BBox, LatLon, PipelineParams, Ride, RoadGraph,
    RouteError, Router, SurfaceGrid,
};

pub use config::Config;
pub use store::Store;

pub const GEOJSON: &str = "application/geo+json";
const MAX_UPLOAD_BYTES: usize = 64 << 20;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("{path}: {source}", path = .0.display(), source = .1)]
    Io(PathBuf, std::io::Error),
    #[error("{path}: {msg}", path = .0.display(), msg = .1)]
    Corrupt(PathBuf, String),
    #[error("configuration: {0}")]
    Config(String),
}

/// What readers see: an immutable grid and a router built against it.
#[derive(Debug, Default)]
pub struct Snapshot {
    /// `None` until the grid origin is known.
    pub grid: Option<SurfaceGrid>,
    pub router: Option<Router>,
    pub rides: usize,
}

pub struct AppState {
    config: Config,
    store: Store,
    graph: Option<RoadGraph>,
    snapshot: RwLock<Arc<Snapshot>>,
    writer: tokio::sync::Mutex<()>,
}

fn build_router(graph: Option<&RoadGraph>, grid: Option<&SurfaceGrid>, params: &PipelineParams) -> Option<Router> {
    let graph = graph?;
    match grid {
        Some(g) => Some(Router::new(graph.clone(), g)),
        None => {
            // no data yet: every edge is neutral, any origin near the graph will do
            let origin = params.origin_for(graph.nodes().values().copied())?;
            let empty = SurfaceGrid::new(params.clone().with_origin(origin)).ok()?;
            Some(Router::new(graph.clone(), &empty))
        }
    }
}

impl AppState {
    /// Opens the data directory, loading the persisted grid and the graph.
    pub fn open(config: Config) -> Result<Self, ServiceError> {
        let store = Store::open(&config.data_dir)?;
        let graph = match &config.graph {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| ServiceError::Io(p.clone(), e))?;
                Some(RoadGraph::parse(&text).map_err(|e| ServiceError::Corrupt(p.clone(), e.to_string()))?)
            }
            None => None,
        };
        let mut grid = store.load_grid()?;
        if let Some(g) = &grid {
            if config.params.grid_origin.is_some() && g.params != config.params {
                log::warn!("persisted grid was built with different parameters; keeping its parameters");
            }
        } else if config.params.grid_origin.is_some() {
            grid = Some(SurfaceGrid::new(config.params.clone()).map_err(|e| ServiceError::Config(e.to_string()))?);
        }
        let params = grid.as_ref().map_or(&config.params, |g| &g.params);
        let router = build_router(graph.as_ref(), grid.as_ref(), params);
        let snapshot = Snapshot { grid, router, rides: store.ride_count()? };
        Ok(Self {
            config,
            store,
            graph,
            snapshot: RwLock::new(Arc::new(snapshot)),
            writer: tokio::sync::Mutex::new(()),
        })
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.snapshot.read().expect("snapshot lock").clone()
    }

    fn publish(&self, s: Snapshot) {
        *self.snapshot.write().expect("snapshot lock") = Arc::new(s);
    }

    pub fn config(&self) -> &Config {
        &self.config
    }
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

fn bad_request(msg: impl Into<String>) -> ApiError {
    ApiError(StatusCode::BAD_REQUEST, msg.into())
}

fn geojson(body: String) -> Response {
    ([(header::CONTENT_TYPE, HeaderValue::from_static(GEOJSON))], body).into_response()
}

type Params = Query<HashMap<String, String>>;

async fn cells(State(state): State<Arc<AppState>>, Query(q): Params) -> Result<Response, ApiError> {
    let raw = q.get("bbox").ok_or_else(|| bad_request("missing bbox"))?;
    let bbox = BBox::parse(raw).filter(BBox::is_valid).ok_or_else(|| bad_request(format!("bad bbox `{raw}`")))?;
    let area = bbox.area_km2();
    if area > state.config.max_bbox_km2 {
        return Err(ApiError(
            StatusCode::PAYLOAD_TOO_LARGE,
            format!("bbox covers {area:.1} km², limit is {} km²", state.config.max_bbox_km2),
        ));
    }
    let snap = state.snapshot();
    let body = match &snap.grid {
        Some(g) => export::to_geojson(g, Some(&bbox)),
        None => json!({ "type": "FeatureCollection", "features": [] }).to_string(),
    };
    Ok(geojson(body))
}

fn parse_point(q: &HashMap<String, String>, key: &str) -> Result<LatLon, ApiError> {
    let raw = q.get(key).ok_or_else(|| bad_request(format!("missing {key}")))?;
    let mut it = raw.split(',').map(|s| s.trim().parse::<f64>());
    match (it.next(), it.next(), it.next()) {
        (Some(Ok(lat)), Some(Ok(lon)), None) if (-90.0..=90.0).contains(&lat) && (-180.0..=180.0).contains(&lon) => {
            Ok(LatLon::new(lat, lon))
        }
        _ => Err(bad_request(format!("bad {key} `{raw}`, expected lat,lon"))),
    }
}

async fn route(State(state): State<Arc<AppState>>, Query(q): Params) -> Result<Response, ApiError> {
    let from = parse_point(&q, "from")?;
    let to = parse_point(&q, "to")?;
    let slider = match q.get("sq") {
        None => 0,
        Some(s) => s.parse::<u8>().ok().filter(|v| *v <= MAX_SLIDER).ok_or_else(|| bad_request(format!("bad sq `{s}`, expected 0 to {MAX_SLIDER}")))?,
    };
    let snap = state.snapshot();
    let router = snap
        .router
        .as_ref()
        .ok_or_else(|| ApiError(StatusCode::SERVICE_UNAVAILABLE, "no road graph configured".into()))?;
    match router.route(&RouteRequest { from, to, slider }) {
        Ok(r) => Ok(geojson(r.to_geojson(slider).to_string())),
        Err(e @ (RouteError::NoSnap(_) | RouteError::Unreachable)) => Err(ApiError(StatusCode::NOT_FOUND, e.to_string())),
        Err(e @ RouteError::BadSlider(_)) => Err(bad_request(e.to_string())),
    }
}

async fn health(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    let snap = state.snapshot();
    let cells = snap.grid.as_ref().map_or(0, |g| g.cells.len());
    Json(json!({ "status": "ok", "rides": snap.rides, "cells": cells }))
}

/// Runs the pipeline for one ride against `grid`, returning the updated grid
/// and the number of distinct cells touched.
fn ingest(ride: Ride, grid: Option<SurfaceGrid>, params: &PipelineParams) -> Result<(String, Option<SurfaceGrid>, usize), ApiError> {
    let unprocessable = |e: &dyn std::fmt::Display| ApiError(StatusCode::UNPROCESSABLE_ENTITY, e.to_string());
    let series = preprocess_ride(&ride, params).map_err(|e| unprocessable(&e))?;
    if series.points.is_empty() {
        return Ok((ride.ride_id, grid, 0));
    }
    let quantized = quantize_ride(&series, params).map_err(|e| unprocessable(&e))?;
    let mut grid = match grid {
        Some(g) => g,
        None => {
            let origin = params
                .origin_for(quantized.samples.iter().map(|s| LatLon::new(s.lat, s.lon)))
                .expect("non-empty ride");
            SurfaceGrid::new(params.clone().with_origin(origin)).map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        }
    };
    let touched: BTreeSet<_> = quantized
        .samples
        .iter()
        .filter_map(|s| cell_of(LatLon::new(s.lat, s.lon), &grid.params).ok())
        .collect();
    grid.add_ride(&quantized);
    Ok((ride.ride_id, Some(grid), touched.len()))
}

async fn upload(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let _guard = state.writer.lock().await;
    let current = state.snapshot();
    let params = current.grid.as_ref().map_or(&state.config.params, |g| &g.params).clone();

    let ride = parse_ride(&body).map_err(|e| bad_request(e.to_string()))?;
    if state.store.contains(&ride.ride_id) {
        return Err(ApiError(StatusCode::CONFLICT, format!("ride `{}` already uploaded", ride.ride_id)));
    }

    let grid = current.grid.clone();
    let (ride_id, grid, touched) = tokio::task::spawn_blocking(move || ingest(ride, grid, &params))
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;

    let internal = |e: ServiceError| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string());
    state.store.save_ride(&ride_id, &body).map_err(internal)?;
    if let Some(g) = &grid {
        state.store.save_grid(g).map_err(internal)?;
    }
    let router = build_router(state.graph.as_ref(), grid.as_ref(), &state.config.params);
    state.publish(Snapshot { grid, router, rides: current.rides + 1 });
    log::info!("ride {ride_id}: {touched} cells updated");
    Ok(Json(json!({ "ride_id": ride_id, "cells_updated": touched })).into_response())
}

pub fn app(state: Arc<AppState>) -> axum::Router {
    let api = axum::Router::new()
        .route("/api/cells", get(cells))
        .route("/api/route", get(route))
        .route("/api/rides", post(upload))
        .route("/api/health", get(health))
        .layer(DefaultBodyLimit::max(MAX_UPLOAD_BYTES));
    let api = match state.config.cors_origin.as_deref() {
        Some("*") => api.layer(CorsLayer::new().allow_origin(Any).allow_methods(Any).allow_headers(Any)),
        Some(origin) => match HeaderValue::from_str(origin) {
            Ok(v) => api.layer(CorsLayer::new().allow_origin(v).allow_methods(Any).allow_headers(Any)),
            Err(_) => {
                log::warn!("ignoring invalid CORS origin `{origin}`");
                api
            }
        },
        None => api,
    };
    let api = match &state.config.static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    };
    api.with_state(state)
}

/// Binds the configured address and serves until Ctrl-C.
pub async fn serve(config: Config) -> Result<(), ServiceError> {
    let addr = config.listen;
    let state = Arc::new(AppState::open(config)?);
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| ServiceError::Io(PathBuf::from(addr.to_string()), e))?;
    log::info!("listening on {addr}");
    axum::serve(listener, app(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| ServiceError::Io(PathBuf::from(addr.to_string()), e))
}

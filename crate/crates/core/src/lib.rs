//! Surface quality of cycling infrastructure from crowdsensed smartphone rides.
//!
//! Rides go through on-phone downsampling ([`edge`]), server-side cleaning
//! and bumpiness extraction ([`cloud`]), per-ride quantization and grid
//! aggregation ([`quality`]), and end up as a GeoJSON map ([`export`]) or as
//! weights for quality-aware routing ([`routing`]). [`synth`] generates rides
//! over streets with known surfaces to check the whole chain.

pub mod cloud;
pub mod edge;
pub mod export;
pub mod fixtures;
pub mod geo;
pub mod params;
pub mod pipeline;
pub mod quality;
pub mod ride;
pub mod routing;
pub mod synth;

pub use cloud::{preprocess_ride, BumpinessPoint, BumpinessSeries, CloudError};
pub use edge::{downsample_ride, EdgeError};
pub use export::{color_of, to_geojson, OutOfRange};
pub use geo::{BBox, CellIndex, GeoError, LatLon, LocalXY};
pub use params::{ParamsError, PipelineParams};
pub use pipeline::grid_from_series;
pub use quality::{aggregate, quantize_ride, GridCell, QualityError, QuantizedRide, RideKey, SurfaceGrid};
pub use ride::{parse_ride, write_ride, GpsFix, MotionSample, Ride, RideError};
pub use routing::{GraphError, RoadGraph, RouteError, RouteRequest, RouteResult, Router};
pub use synth::{run_experiment, SurfaceClass, SynthError, SyntheticWorld};

/// Any error the pipeline can produce.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Ride(#[from] RideError),
    #[error(transparent)]
    Params(#[from] ParamsError),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Edge(#[from] EdgeError),
    #[error(transparent)]
    Cloud(#[from] CloudError),
    #[error(transparent)]
    Quality(#[from] QualityError),
    #[error(transparent)]
    Export(#[from] OutOfRange),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Route(#[from] RouteError),
    #[error(transparent)]
    Synth(#[from] SynthError),
}

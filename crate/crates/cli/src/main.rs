use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use veloqual_core::cloud::{parse_bumpiness, write_bumpiness, BumpinessSeries};
use veloqual_core::routing::{RouteRequest, Router};
use veloqual_core::synth::experiment_ride;
use veloqual_core::{
    downsample_ride, export, grid_from_series, parse_ride, preprocess_ride, write_ride, BBox, LatLon, PipelineParams,
    RoadGraph, SurfaceGrid, SyntheticWorld,
};

/// Surface quality of cycling infrastructure from smartphone rides.
#[derive(Parser)]
#[command(name = "veloqual", version, arg_required_else_help = true)]
struct Cli {
    /// Pipeline parameters as JSON; missing fields keep their defaults.
    #[arg(long, global = true, value_name = "FILE")]
    params: Option<PathBuf>,
    /// Worker threads for per-ride processing (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    /// Log progress to stderr; repeat for more detail.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Output {
    /// Write here instead of stdout.
    #[arg(short, long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// On-phone step: 50 Hz ride to 10 Hz.
    Downsample {
        ride: PathBuf,
        #[command(flatten)]
        output: Output,
    },
    /// Ride file to bumpiness CSV (trim, stop removal, moving variance).
    Preprocess {
        ride: PathBuf,
        #[command(flatten)]
        output: Output,
    },
    /// Bumpiness CSVs or ride files to a grid snapshot.
    Aggregate {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Ignore samples before this timestamp (ms since epoch).
        #[arg(long)]
        since: Option<i64>,
        /// Ignore samples after this timestamp (ms since epoch).
        #[arg(long)]
        until: Option<i64>,
        #[command(flatten)]
        output: Output,
    },
    /// Grid snapshot to GeoJSON.
    Export {
        #[arg(long)]
        grid: PathBuf,
        /// minLon,minLat,maxLon,maxLat
        #[arg(long)]
        bbox: Option<String>,
        #[command(flatten)]
        output: Output,
    },
    /// Quality-aware route as a GeoJSON feature.
    Route {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        grid: PathBuf,
        /// lat,lon
        #[arg(long)]
        from: String,
        /// lat,lon
        #[arg(long)]
        to: String,
        /// Surface-quality slider, 0 (distance only) to 10.
        #[arg(long, default_value_t = 0, value_parser = clap::value_parser!(u8).range(0..=10))]
        sq: u8,
        #[command(flatten)]
        output: Output,
    },
    /// Generate raw rides over a synthetic world, one file per ride.
    Synth {
        #[arg(long)]
        world: PathBuf,
        #[arg(long, default_value_t = 100)]
        rides: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory for the `.ride` files.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("cannot read {}", path.display()))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn emit(output: &Output, bytes: &[u8]) -> Result<()> {
    match &output.out {
        Some(p) => fs::write(p, bytes).with_context(|| format!("cannot write {}", p.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn parse_latlon(s: &str) -> Result<LatLon> {
    let parts: Vec<&str> = s.split(',').collect();
    if let [lat, lon] = parts[..] {
        if let (Ok(lat), Ok(lon)) = (lat.trim().parse(), lon.trim().parse()) {
            return Ok(LatLon::new(lat, lon));
        }
    }
    bail!("`{s}` is not lat,lon")
}

/// Bumpiness of one input, which may already be a CSV or still a ride file.
fn load_series(path: &Path, params: &PipelineParams) -> Result<BumpinessSeries> {
    let bytes = read(path)?;
    let ctx = || path.display().to_string();
    if bytes.starts_with(b"veloqual-ride") {
        let ride = parse_ride(&bytes).with_context(ctx)?;
        return preprocess_ride(&ride, params).with_context(ctx);
    }
    let text = String::from_utf8(bytes).with_context(ctx)?;
    parse_bumpiness(&text).with_context(ctx)
}

fn run(cli: Cli) -> Result<()> {
    let params = match &cli.params {
        Some(p) => PipelineParams::from_json(&read_text(p)?).with_context(|| p.display().to_string())?,
        None => PipelineParams::default(),
    };
    if let Some(n) = cli.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global()?;
    }

    match cli.command {
        Command::Downsample { ride, output } => {
            let r = parse_ride(&read(&ride)?).with_context(|| ride.display().to_string())?;
            let d = downsample_ride(&r, &params).with_context(|| ride.display().to_string())?;
            emit(&output, &write_ride(&d))
        }
        Command::Preprocess { ride, output } => {
            let r = parse_ride(&read(&ride)?).with_context(|| ride.display().to_string())?;
            let s = preprocess_ride(&r, &params).with_context(|| ride.display().to_string())?;
            emit(&output, write_bumpiness(&s).as_bytes())
        }
        Command::Aggregate { inputs, since, until, output } => {
            let mut series = inputs
                .par_iter()
                .map(|p| load_series(p, &params))
                .collect::<Result<Vec<_>>>()?;
            for s in &mut series {
                s.points.retain(|p| since.is_none_or(|t| p.ts_ms >= t) && until.is_none_or(|t| p.ts_ms <= t));
            }
            let agg = grid_from_series(&series, &params)?;
            if agg.skipped > 0 {
                log::warn!("{} samples outside the grid range were skipped", agg.skipped);
            }
            log::info!("{} rides, {} cells", series.len(), agg.grid.cells.len());
            emit(&output, agg.grid.to_json().as_bytes())
        }
        Command::Export { grid, bbox, output } => {
            let g = SurfaceGrid::from_json(&read_text(&grid)?).with_context(|| grid.display().to_string())?;
            let bbox = match bbox {
                Some(s) => Some(BBox::parse(&s).filter(BBox::is_valid).with_context(|| format!("bad bbox `{s}`"))?),
                None => None,
            };
            emit(&output, export::to_geojson(&g, bbox.as_ref()).as_bytes())
        }
        Command::Route { graph, grid, from, to, sq, output } => {
            let g = RoadGraph::parse(&read_text(&graph)?).with_context(|| graph.display().to_string())?;
            let s = SurfaceGrid::from_json(&read_text(&grid)?).with_context(|| grid.display().to_string())?;
            let req = RouteRequest { from: parse_latlon(&from)?, to: parse_latlon(&to)?, slider: sq };
            let r = Router::new(g, &s).route(&req)?;
            emit(&output, r.to_geojson(sq).to_string().as_bytes())
        }
        Command::Synth { world, rides, seed, out } => {
            let w = SyntheticWorld::from_json(&read_text(&world)?).with_context(|| world.display().to_string())?;
            fs::create_dir_all(&out).with_context(|| format!("cannot create {}", out.display()))?;
            (0..rides).into_par_iter().try_for_each(|i| -> Result<()> {
                let ride = experiment_ride(&w, seed, i)?;
                let path = out.join(format!("{}.ride", ride.ride_id));
                fs::write(&path, write_ride(&ride)).with_context(|| format!("cannot write {}", path.display()))
            })?;
            log::info!("wrote {rides} rides to {}", out.display());
            Ok(())
        }
        Command::Serve { config } => {
            let mut c = veloqual_service::Config::load(config.as_deref())?;
            if cli.params.is_some() {
                c.params = params;
            }
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(veloqual_service::serve(c))?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use veloqual_core::PipelineParams;

use crate::ServiceError;

pub const ENV_PREFIX: &str = "VELOQUAL_";

fn default_listen() -> SocketAddr {
    SocketAddr::from(([127, 0, 0, 1], 8080))
}

fn default_data_dir() -> PathBuf {
    PathBuf::from("data")
}

fn default_max_bbox() -> f64 {
    25.0
}

/// Service configuration, read from TOML. Every top-level scalar can be
/// overridden by `VELOQUAL_<FIELD>` (upper case).
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default = "default_listen")]
    pub listen: SocketAddr,
    #[serde(default = "default_data_dir")]
    pub data_dir: PathBuf,
    /// Road graph for `/api/route`; routing answers 503 without one.
    #[serde(default)]
    pub graph: Option<PathBuf>,
    #[serde(default = "default_max_bbox")]
    pub max_bbox_km2: f64,
    #[serde(default)]
    pub cors_origin: Option<String>,
    /// Directory served at `/`, typically the web UI bundle.
    #[serde(default)]
    pub static_dir: Option<PathBuf>,
    #[serde(default)]
    pub params: PipelineParams,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            listen: default_listen(),
            data_dir: default_data_dir(),
            graph: None,
            max_bbox_km2: default_max_bbox(),
            cors_origin: None,
            static_dir: None,
            params: PipelineParams::default(),
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, ServiceError> {
        let c: Self = toml::from_str(text).map_err(|e| ServiceError::Config(e.to_string()))?;
        c.params.validate().map_err(|e| ServiceError::Config(e.to_string()))?;
        Ok(c)
    }

    /// Reads `path` (or starts from defaults) and applies the process
    /// environment.
    pub fn load(path: Option<&Path>) -> Result<Self, ServiceError> {
        let mut c = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| ServiceError::Io(p.to_path_buf(), e))?;
                Self::from_toml(&text)?
            }
            None => Self::default(),
        };
        c.apply_env(std::env::vars())?;
        Ok(c)
    }

    pub fn apply_env<I>(&mut self, vars: I) -> Result<(), ServiceError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let bad = |k: &str, v: &str| ServiceError::Config(format!("{ENV_PREFIX}{k}: cannot use `{v}`"));
        for (key, value) in vars {
            let Some(k) = key.strip_prefix(ENV_PREFIX) else { continue };
            match k {
                "LISTEN" => self.listen = value.parse().map_err(|_| bad(k, &value))?,
                "DATA_DIR" => self.data_dir = PathBuf::from(value),
                "GRAPH" => self.graph = Some(PathBuf::from(value)).filter(|p| !p.as_os_str().is_empty()),
                "MAX_BBOX_KM2" => {
                    self.max_bbox_km2 = value.parse().ok().filter(|v: &f64| *v > 0.0).ok_or_else(|| bad(k, &value))?
                }
                "CORS_ORIGIN" => self.cors_origin = Some(value).filter(|s| !s.is_empty()),
                "STATIC_DIR" => self.static_dir = Some(PathBuf::from(value)).filter(|p| !p.as_os_str().is_empty()),
                _ => log::warn!("ignoring unknown variable {key}"),
            }
        }
        Ok(())
    }
}

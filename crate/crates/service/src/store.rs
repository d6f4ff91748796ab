//! Flat-file persistence: one file per uploaded ride plus the grid snapshot.
//!
//! ```text
//! <data_dir>/rides/<ride key>.ride
//! <data_dir>/grid.json
//! ```
//!
//! Files are written next to their target and renamed into place, so a reader
//! sees either the old or the new content.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use veloqual_core::{RideKey, SurfaceGrid};

use crate::ServiceError;

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> ServiceError + '_ {
    move |e| ServiceError::Io(path.to_path_buf(), e)
}

/// Write-new-then-rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ServiceError> {
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(io(&tmp))?;
    f.write_all(bytes).map_err(io(&tmp))?;
    f.sync_all().map_err(io(&tmp))?;
    fs::rename(&tmp, path).map_err(io(path))
}

impl Store {
    pub fn open(root: &Path) -> Result<Self, ServiceError> {
        let rides = root.join("rides");
        fs::create_dir_all(&rides).map_err(io(&rides))?;
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn grid_path(&self) -> PathBuf {
        self.root.join("grid.json")
    }

    pub fn ride_path(&self, ride_id: &str) -> PathBuf {
        self.root.join("rides").join(format!("{}.ride", RideKey::of(ride_id).hex()))
    }

    pub fn contains(&self, ride_id: &str) -> bool {
        self.ride_path(ride_id).exists()
    }

    pub fn save_ride(&self, ride_id: &str, bytes: &[u8]) -> Result<(), ServiceError> {
        write_atomic(&self.ride_path(ride_id), bytes)
    }

    pub fn ride_count(&self) -> Result<usize, ServiceError> {
        let dir = self.root.join("rides");
        let entries = fs::read_dir(&dir).map_err(io(&dir))?;
        Ok(entries
            .filter_map(Result::ok)
            .filter(|e| e.path().extension().is_some_and(|x| x == "ride"))
            .count())
    }

    pub fn load_grid(&self) -> Result<Option<SurfaceGrid>, ServiceError> {
        let path = self.grid_path();
        match fs::read_to_string(&path) {
            Ok(text) => SurfaceGrid::from_json(&text)
                .map(Some)
                .map_err(|e| ServiceError::Corrupt(path.clone(), e.to_string())),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(ServiceError::Io(path, e)),
        }
    }

    pub fn save_grid(&self, grid: &SurfaceGrid) -> Result<(), ServiceError> {
        write_atomic(&self.grid_path(), grid.to_json().as_bytes())
    }
}

//! Inputs shared by the benchmarks.

use veloqual_core::synth::{chain_world, experiment_ride, SurfaceClass};
use veloqual_core::{LatLon, Ride, SyntheticWorld};

pub fn world() -> SyntheticWorld {
    use SurfaceClass::*;
    chain_world(LatLon::new(52.5, 13.4), &[Asphalt, PavingStones, FineGravel, Cobblestones], 600.0)
}

/// A raw 50 Hz ride of roughly eight minutes.
pub fn raw_ride() -> Ride {
    experiment_ride(&world(), 1, 0).expect("bench world is valid")
}

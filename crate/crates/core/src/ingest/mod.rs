//! Input parsing: occupancy records, block and POI geometries, amenity
//! statistics, and the block/amenity spatial join.

mod geodata;
mod matching;
mod occupancy;
mod stats;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use geodata::{
    area_stats_from_pois, parse_blocks, parse_geodata, parse_pois, Block, Poi,
};
pub use matching::{match_amenities, AmenityOccurrence, BlockAmenityIndex, MatchDiagnostics};
pub use occupancy::{
    parse_occupancy_csv, parse_occupancy_reader, parse_timestamp, write_occupancy_csv,
    OccupancyFormat, OccupancyLoad, OccupancyRecord, RowError, OCCUPANCY_HEADER,
};
pub use stats::{load_amenity_stats, read_amenity_stats, AmenityStats, AmenityStatsTable, Basis};

/// Mean Earth radius used for great-circle distances.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// A WGS84 position in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        let p = LatLon { lat, lon };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if (-90.0..=90.0).contains(&self.lat) && (-180.0..=180.0).contains(&self.lon) {
            Ok(())
        } else {
            Err(Error::CoordinateOutOfRange {
                lat: self.lat,
                lon: self.lon,
            })
        }
    }
}

/// Great-circle distance in meters between two positions.
pub fn haversine(a: LatLon, b: LatLon) -> f64 {
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let dphi = phi2 - phi1;
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

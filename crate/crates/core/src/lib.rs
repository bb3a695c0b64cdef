//! Parking occupancy estimation for city blocks without sensors, by
//! transferring models trained on similar monitored clusters.

pub mod aggregate;
pub mod error;
pub mod estimate;
pub mod evaluate;
pub mod geocluster;
pub mod ingest;
pub mod learn;
pub mod represent;
pub mod similarity;
pub mod workspace;

pub use error::{Error, Result};

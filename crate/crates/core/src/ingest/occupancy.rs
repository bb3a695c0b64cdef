use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const OCCUPANCY_HEADER: [&str; 5] =
    ["block_id", "timestamp", "price_rate", "total_spots", "occupied"];

const TIMESTAMP_OUT: &str = "%Y-%m-%d %H:%M:%S";

/// One sensor reading for one block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyRecord {
    pub block_id: String,
    pub timestamp: NaiveDateTime,
    pub price_rate: f64,
    pub total_spots: u32,
    /// May exceed `total_spots`; capping is left to aggregation.
    pub occupied: u32,
}

/// Column layout of an occupancy export.
#[derive(Debug, Clone)]
pub struct OccupancyFormat {
    pub delimiter: u8,
    /// Accepted timestamp layouts, tried in order. Naive local time.
    pub timestamp_formats: Vec<String>,
}

impl Default for OccupancyFormat {
    fn default() -> Self {
        OccupancyFormat {
            delimiter: b',',
            timestamp_formats: vec!["%Y-%m-%d %H:%M:%S".into(), "%Y-%m-%d %H:%M".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowError {
    pub line: u64,
    pub message: String,
}

impl From<RowError> for Error {
    fn from(e: RowError) -> Self {
        Error::Row {
            line: e.line,
            message: e.message,
        }
    }
}

/// Parsed records plus the rows that were rejected.
#[derive(Debug, Clone, Default)]
pub struct OccupancyLoad {
    pub records: Vec<OccupancyRecord>,
    pub rejected: Vec<RowError>,
}

impl OccupancyLoad {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Fails on the first rejected row.
    pub fn into_strict(self) -> Result<Vec<OccupancyRecord>> {
        match self.rejected.into_iter().next() {
            Some(e) => Err(e.into()),
            None => Ok(self.records),
        }
    }
}

pub fn parse_timestamp(raw: &str, format: &OccupancyFormat) -> Option<NaiveDateTime> {
    let raw = raw.trim();
    format
        .timestamp_formats
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(raw, f).ok())
}

pub fn parse_occupancy_csv(path: &Path, format: &OccupancyFormat) -> Result<OccupancyLoad> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_occupancy_reader(file, format)
}

pub fn parse_occupancy_reader<R: Read>(reader: R, format: &OccupancyFormat) -> Result<OccupancyLoad> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(format.delimiter)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);

    let header = rdr.headers()?.clone();
    let found: Vec<&str> = header.iter().collect();
    if found != OCCUPANCY_HEADER {
        return Err(Error::MalformedHeader {
            expected: OCCUPANCY_HEADER.join(","),
            found: found.join(","),
        });
    }

    let mut load = OccupancyLoad::default();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        match parse_row(&row, format) {
            Ok(rec) => load.records.push(rec),
            Err(message) => load.rejected.push(RowError { line, message }),
        }
    }
    Ok(load)
}

fn parse_row(row: &csv::StringRecord, format: &OccupancyFormat) -> Result<OccupancyRecord, String> {
    if row.len() != OCCUPANCY_HEADER.len() {
        return Err(format!("expected 5 fields, found {}", row.len()));
    }
    let block_id = row[0].to_string();
    if block_id.is_empty() {
        return Err("empty block_id".into());
    }
    let timestamp = parse_timestamp(&row[1], format)
        .ok_or_else(|| format!("unparseable timestamp `{}`", &row[1]))?;
    let price_rate: f64 = row[2]
        .parse()
        .map_err(|_| format!("unparseable price_rate `{}`", &row[2]))?;
    if !(price_rate >= 0.0 && price_rate.is_finite()) {
        return Err(format!("price_rate must be non-negative, got {price_rate}"));
    }
    let total_spots: u32 = row[3]
        .parse()
        .map_err(|_| format!("unparseable total_spots `{}`", &row[3]))?;
    if total_spots == 0 {
        return Err("total_spots must be at least 1".into());
    }
    let occupied: u32 = row[4]
        .parse()
        .map_err(|_| format!("unparseable occupied `{}`", &row[4]))?;
    Ok(OccupancyRecord {
        block_id,
        timestamp,
        price_rate,
        total_spots,
        occupied,
    })
}

pub fn write_occupancy_csv<W: Write>(writer: W, records: &[OccupancyRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(OCCUPANCY_HEADER)?;
    for r in records {
        w.write_record([
            r.block_id.clone(),
            r.timestamp.format(TIMESTAMP_OUT).to_string(),
            r.price_rate.to_string(),
            r.total_spots.to_string(),
            r.occupied.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

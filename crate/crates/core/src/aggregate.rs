//! Per-cluster, per-timestamp averaging of occupancy records and model
//! feature extraction.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::{Datelike, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::OccupancyRecord;

pub const TRAINING_HEADER: [&str; 8] = [
    "timestamp",
    "year",
    "week",
    "weekday",
    "hour",
    "price_rate",
    "total_spots",
    "occupancy",
];

const TIMESTAMP_OUT: &str = "%Y-%m-%d %H:%M:%S";

/// Per-block occupancy as a fraction, capped at 1.
pub fn occupancy_rate(record: &OccupancyRecord) -> f64 {
    debug_assert!(record.total_spots > 0, "rejected at ingest");
    (f64::from(record.occupied) / f64::from(record.total_spots)).min(1.0)
}

fn is_capped(record: &OccupancyRecord) -> bool {
    record.occupied > record.total_spots
}

/// How the occupancy target of an aggregated row is formed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OccupancyMode {
    /// Mean of the capped per-block rates.
    #[default]
    RateMean,
    /// Mean occupied count over mean capacity, capped at 1.
    CountMean,
}

/// Whether training rows are per-timestamp cluster means or raw records.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Datapoints {
    #[default]
    Aggregate,
    All,
}

impl Datapoints {
    pub fn as_str(self) -> &'static str {
        match self {
            Datapoints::Aggregate => "aggregate",
            Datapoints::All => "all",
        }
    }
}

impl fmt::Display for Datapoints {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Datapoints {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "aggregate" | "agg" => Ok(Datapoints::Aggregate),
            "all" => Ok(Datapoints::All),
            other => Err(Error::UnknownVariant {
                kind: "datapoints",
                value: other.into(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedPoint {
    pub timestamp: NaiveDateTime,
    pub price_rate: f64,
    pub total_spots: f64,
    /// Mean occupied count (uncapped).
    pub occupied: f64,
    /// Occupancy fraction in [0, 1].
    pub occupancy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AggregationDiagnostics {
    pub input_rows: usize,
    pub output_rows: usize,
    /// Records whose occupied count exceeded capacity.
    pub capped: usize,
}

impl AggregationDiagnostics {
    pub fn shrink_factor(&self) -> f64 {
        self.input_rows as f64 / self.output_rows.max(1) as f64
    }
}

/// Averages the records of `blocks_in_cluster` per timestamp. Records of
/// other blocks are ignored.
pub fn aggregate_cluster(
    records: &[OccupancyRecord],
    blocks_in_cluster: &BTreeSet<String>,
    mode: OccupancyMode,
) -> (Vec<AggregatedPoint>, AggregationDiagnostics) {
    #[derive(Default)]
    struct Acc {
        n: usize,
        price: f64,
        spots: f64,
        occupied: f64,
        rate: f64,
    }

    let mut by_time: BTreeMap<NaiveDateTime, Acc> = BTreeMap::new();
    let mut diag = AggregationDiagnostics::default();
    for r in records.iter().filter(|r| blocks_in_cluster.contains(&r.block_id)) {
        diag.input_rows += 1;
        diag.capped += usize::from(is_capped(r));
        let acc = by_time.entry(r.timestamp).or_default();
        acc.n += 1;
        acc.price += r.price_rate;
        acc.spots += f64::from(r.total_spots);
        acc.occupied += f64::from(r.occupied);
        acc.rate += occupancy_rate(r);
    }

    let points: Vec<AggregatedPoint> = by_time
        .into_iter()
        .map(|(timestamp, acc)| {
            let n = acc.n as f64;
            let (spots, occupied) = (acc.spots / n, acc.occupied / n);
            let occupancy = match mode {
                OccupancyMode::RateMean => acc.rate / n,
                OccupancyMode::CountMean => (occupied / spots).min(1.0),
            };
            AggregatedPoint {
                timestamp,
                price_rate: acc.price / n,
                total_spots: spots,
                occupied,
                occupancy,
            }
        })
        .collect();
    diag.output_rows = points.len();
    (points, diag)
}

/// One record per training row, without averaging.
pub fn unaggregated_points(
    records: &[OccupancyRecord],
    blocks_in_cluster: &BTreeSet<String>,
) -> Vec<AggregatedPoint> {
    let mut points: Vec<AggregatedPoint> = records
        .iter()
        .filter(|r| blocks_in_cluster.contains(&r.block_id))
        .map(|r| AggregatedPoint {
            timestamp: r.timestamp,
            price_rate: r.price_rate,
            total_spots: f64::from(r.total_spots),
            occupied: f64::from(r.occupied),
            occupancy: occupancy_rate(r),
        })
        .collect();
    points.sort_by_key(|p| p.timestamp);
    points
}

pub fn cluster_points(
    records: &[OccupancyRecord],
    blocks_in_cluster: &BTreeSet<String>,
    datapoints: Datapoints,
) -> Vec<AggregatedPoint> {
    match datapoints {
        Datapoints::Aggregate => {
            aggregate_cluster(records, blocks_in_cluster, OccupancyMode::RateMean).0
        }
        Datapoints::All => unaggregated_points(records, blocks_in_cluster),
    }
}

/// Model inputs derived from a timestamp and the two lot attributes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    /// ISO-8601 week-numbering year.
    pub year: i32,
    /// ISO week, 1..=53.
    pub week: u32,
    /// Monday = 1 .. Sunday = 7.
    pub weekday: u32,
    pub hour: u32,
    pub price_rate: f64,
    pub total_spots: f64,
}

impl FeatureVector {
    pub const NAMES: [&'static str; 6] =
        ["year", "week", "weekday", "hour", "price_rate", "total_spots"];

    pub fn to_array(&self) -> [f64; 6] {
        [
            f64::from(self.year),
            f64::from(self.week),
            f64::from(self.weekday),
            f64::from(self.hour),
            self.price_rate,
            self.total_spots,
        ]
    }
}

pub fn extract_features(timestamp: NaiveDateTime, price_rate: f64, total_spots: f64) -> FeatureVector {
    let iso = timestamp.date().iso_week();
    FeatureVector {
        year: iso.year(),
        week: iso.week(),
        weekday: timestamp.weekday().number_from_monday(),
        hour: timestamp.hour(),
        price_rate,
        total_spots,
    }
}

impl AggregatedPoint {
    pub fn features(&self) -> FeatureVector {
        extract_features(self.timestamp, self.price_rate, self.total_spots)
    }
}

pub fn write_training_csv<W: Write>(writer: W, points: &[AggregatedPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(TRAINING_HEADER)?;
    for p in points {
        let f = p.features();
        w.write_record([
            p.timestamp.format(TIMESTAMP_OUT).to_string(),
            f.year.to_string(),
            f.week.to_string(),
            f.weekday.to_string(),
            f.hour.to_string(),
            p.price_rate.to_string(),
            p.total_spots.to_string(),
            p.occupancy.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<training csv>", e))?;
    Ok(())
}

/// Reads rows written by [`write_training_csv`]. The occupied count is not
/// persisted and comes back as `occupancy * total_spots`.
pub fn read_training_csv<R: Read>(reader: R) -> Result<Vec<AggregatedPoint>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != TRAINING_HEADER {
        return Err(Error::MalformedHeader {
            expected: TRAINING_HEADER.join(","),
            found: header.join(","),
        });
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |what: &str| Error::Row {
            line,
            message: format!("unparseable {what}"),
        };
        let timestamp = NaiveDateTime::parse_from_str(&row[0], TIMESTAMP_OUT).map_err(|_| bad("timestamp"))?;
        let num = |i: usize, what: &str| row[i].parse::<f64>().map_err(|_| bad(what));
        let total_spots = num(6, "total_spots")?;
        let occupancy = num(7, "occupancy")?;
        out.push(AggregatedPoint {
            timestamp,
            price_rate: num(5, "price_rate")?,
            total_spots,
            occupied: occupancy * total_spots,
            occupancy,
        });
    }
    Ok(out)
}

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::represent::CategoryScheme;

const STATS_HEADER: [&str; 4] = ["amenity", "mean", "stdev", "category"];

/// What an amenity statistic measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    /// Visiting duration in minutes.
    TimeSpent,
    /// Polygon area in m², reduced by a factor of 20.
    Area,
}

impl Basis {
    pub const ALL: [Basis; 2] = [Basis::TimeSpent, Basis::Area];

    pub fn as_str(self) -> &'static str {
        match self {
            Basis::TimeSpent => "time_spent",
            Basis::Area => "area",
        }
    }
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Basis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "time_spent" => Ok(Basis::TimeSpent),
            "area" => Ok(Basis::Area),
            other => Err(Error::UnknownVariant {
                kind: "basis",
                value: other.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmenityStats {
    pub amenity: String,
    pub mean: f64,
    pub stdev: f64,
    pub category: u8,
}

/// Amenity statistics keyed by amenity name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmenityStatsTable {
    pub basis: Basis,
    pub entries: BTreeMap<String, AmenityStats>,
}

impl AmenityStatsTable {
    pub fn new(basis: Basis) -> Self {
        AmenityStatsTable {
            basis,
            entries: BTreeMap::new(),
        }
    }

    /// Validates and inserts one entry.
    pub fn insert(&mut self, stats: AmenityStats) -> Result<()> {
        if !(stats.mean > 0.0 && stats.mean.is_finite()) {
            return Err(Error::invalid(format!(
                "amenity `{}`: mean must be positive, got {}",
                stats.amenity, stats.mean
            )));
        }
        if !(stats.stdev >= 0.0 && stats.stdev.is_finite()) {
            return Err(Error::invalid(format!(
                "amenity `{}`: stdev must be non-negative, got {}",
                stats.amenity, stats.stdev
            )));
        }
        let expected = CategoryScheme::for_basis(self.basis).categorize(stats.mean);
        if stats.category != expected {
            return Err(Error::CategoryMismatch {
                amenity: stats.amenity,
                mean: stats.mean,
                declared: stats.category,
                expected,
            });
        }
        if self.entries.contains_key(&stats.amenity) {
            return Err(Error::DuplicateAmenity(stats.amenity));
        }
        self.entries.insert(stats.amenity.clone(), stats);
        Ok(())
    }

    pub fn get(&self, amenity: &str) -> Option<&AmenityStats> {
        self.entries.get(amenity)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &AmenityStats> {
        self.entries.values()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(STATS_HEADER)?;
        for s in self.iter() {
            w.write_record([
                s.amenity.clone(),
                s.mean.to_string(),
                s.stdev.to_string(),
                s.category.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

pub fn load_amenity_stats(path: &Path, basis: Basis) -> Result<AmenityStatsTable> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_amenity_stats(file, basis)
}

/// Reads an `amenity,mean,stdev,category` table. Area-basis values are
/// expected already reduced by the factor of 20.
pub fn read_amenity_stats<R: Read>(reader: R, basis: Basis) -> Result<AmenityStatsTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    let found: Vec<&str> = header.iter().collect();
    if found != STATS_HEADER {
        return Err(Error::MalformedHeader {
            expected: STATS_HEADER.join(","),
            found: found.join(","),
        });
    }

    let mut table = AmenityStatsTable::new(basis);
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let field = |i: usize, name: &str| -> Result<f64> {
            row.get(i)
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| Error::Row {
                    line,
                    message: format!("unparseable {name}"),
                })
        };
        let amenity = row.get(0).unwrap_or_default().to_lowercase();
        if amenity.is_empty() {
            return Err(Error::Row {
                line,
                message: "empty amenity name".into(),
            });
        }
        let category = row
            .get(3)
            .and_then(|v| v.parse::<u8>().ok())
            .ok_or_else(|| Error::Row {
                line,
                message: "unparseable category".into(),
            })?;
        table.insert(AmenityStats {
            amenity,
            mean: field(1, "mean")?,
            stdev: field(2, "stdev")?,
            category,
        })?;
    }
    Ok(table)
}

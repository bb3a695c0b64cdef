//! Deterministic synthetic cities for end-to-end runs without sensor data.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::ingest::{write_occupancy_csv, AmenityStats, AmenityStatsTable, Basis, LatLon, OccupancyRecord, EARTH_RADIUS_M};
use crate::represent::CategoryScheme;

/// Visiting durations in minutes: (amenity, mean, stdev).
pub const TIME_SPENT: [(&str, f64, f64); 32] = [
    ("arts_centre", 110.0, 37.0),
    ("bank", 42.0, 65.0),
    ("bar", 121.0, 38.0),
    ("cafe", 76.0, 39.0),
    ("clinic", 100.0, 29.0),
    ("clothes_store", 41.0, 37.0),
    ("community_centre", 119.0, 40.0),
    ("dentist", 104.0, 35.0),
    ("doctors", 60.0, 42.0),
    ("embassy", 75.0, 24.0),
    ("fast_food", 31.0, 15.0),
    ("grocery", 20.0, 10.0),
    ("gym", 100.0, 22.0),
    ("hookah_lounge", 130.0, 17.0),
    ("ice_cream", 23.0, 7.0),
    ("karaoke", 188.0, 15.0),
    ("laundry", 78.0, 16.0),
    ("library", 83.0, 13.0),
    ("music_school", 120.0, 30.0),
    ("nightclub", 189.0, 20.0),
    ("pharmacy", 25.0, 20.0),
    ("post_office", 16.0, 2.0),
    ("pub", 135.0, 21.0),
    ("restaurant", 135.0, 32.0),
    ("salon", 141.0, 53.0),
    ("shelter", 90.0, 0.0),
    ("shop", 43.0, 21.0),
    ("spa", 161.0, 54.0),
    ("stripclub", 140.0, 46.0),
    ("studio", 60.0, 0.0),
    ("veterinary", 67.0, 29.0),
    ("vintage_modern_resale", 38.0, 32.0),
];

pub fn time_spent_table() -> AmenityStatsTable {
    let scheme = CategoryScheme::for_basis(Basis::TimeSpent);
    let mut t = AmenityStatsTable::new(Basis::TimeSpent);
    for (amenity, mean, stdev) in TIME_SPENT {
        t.insert(AmenityStats {
            amenity: amenity.to_string(),
            mean,
            stdev,
            category: scheme.categorize(mean),
        })
        .expect("table rows are consistent");
    }
    t
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Archetype {
    Office,
    Residential,
    Leisure,
}

impl Archetype {
    pub const ALL: [Archetype; 3] = [Archetype::Office, Archetype::Residential, Archetype::Leisure];

    pub fn palette(self) -> &'static [&'static str] {
        match self {
            Archetype::Office => &[
                "post_office",
                "pharmacy",
                "grocery",
                "bank",
                "fast_food",
                "shop",
                "clothes_store",
                "ice_cream",
            ],
            Archetype::Residential => &[
                "laundry", "library", "doctors", "veterinary", "cafe", "shelter", "embassy", "studio",
            ],
            Archetype::Leisure => &[
                "bar",
                "pub",
                "restaurant",
                "nightclub",
                "karaoke",
                "hookah_lounge",
                "spa",
                "arts_centre",
            ],
        }
    }

    /// Expected occupancy fraction at a given weekday and hour.
    pub fn curve(self, weekday: Weekday, hour: u32) -> f64 {
        let h = f64::from(hour) + 0.5;
        let weekend = matches!(weekday, Weekday::Sat | Weekday::Sun);
        match self {
            Archetype::Office if weekend => 0.15 + 0.1 * bump(h, 10.0, 16.0),
            Archetype::Office => 0.2 + 0.65 * bump(h, 8.5, 17.5),
            Archetype::Residential => {
                let day = bump(h, 8.0, 18.0);
                0.85 - if weekend { 0.35 } else { 0.5 } * day
            }
            Archetype::Leisure if weekend => 0.3 + 0.55 * bump(h, 11.0, 24.5),
            Archetype::Leisure => 0.2 + 0.65 * bump(h, 18.0, 24.5),
        }
    }

    fn price_range(self) -> (f64, f64) {
        match self {
            Archetype::Office => (2.0, 3.5),
            Archetype::Residential => (0.25, 1.5),
            Archetype::Leisure => (1.0, 3.0),
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn bump(h: f64, start: f64, end: f64) -> f64 {
    sigmoid(2.0 * (h - start)) * sigmoid(2.0 * (end - h))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCityConfig {
    pub n_blocks: usize,
    /// Between 1 and 3.
    pub n_archetypes: usize,
    pub days: u32,
    pub seed: u64,
    /// Standard deviation of per-reading occupancy noise.
    pub noise: f64,
    pub monitored_fraction: f64,
    /// Chance that a monitored block reports in a given hour.
    pub reporting: f64,
    pub start: NaiveDate,
    pub center: LatLon,
    pub spacing_m: f64,
    pub pois_per_block: (usize, usize),
    /// Share of amenities drawn from a random palette instead of the block's.
    pub amenity_mixing: f64,
}

impl Default for SyntheticCityConfig {
    fn default() -> Self {
        SyntheticCityConfig {
            n_blocks: 200,
            n_archetypes: 3,
            days: 30,
            seed: 7,
            noise: 0.05,
            monitored_fraction: 1.0 / 3.6,
            reporting: 0.95,
            start: NaiveDate::from_ymd_opt(2011, 4, 1).expect("valid date"),
            center: LatLon {
                lat: 37.76,
                lon: -122.45,
            },
            spacing_m: 167.0,
            pois_per_block: (3, 6),
            amenity_mixing: 0.15,
        }
    }
}

impl SyntheticCityConfig {
    fn validate(&self) -> Result<()> {
        if self.n_blocks < 2 {
            return Err(Error::invalid("a synthetic city needs at least two blocks"));
        }
        if !(1..=Archetype::ALL.len()).contains(&self.n_archetypes) {
            return Err(Error::invalid(format!(
                "archetype count must be between 1 and {}",
                Archetype::ALL.len()
            )));
        }
        if self.days == 0 {
            return Err(Error::invalid("days must be positive"));
        }
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.monitored_fraction) || !unit(self.reporting) || !unit(self.amenity_mixing) {
            return Err(Error::invalid("fractions must lie in [0, 1]"));
        }
        if !(self.noise >= 0.0) || !(self.spacing_m > 0.0) {
            return Err(Error::invalid("noise must be >= 0 and spacing > 0"));
        }
        if self.pois_per_block.0 > self.pois_per_block.1 {
            return Err(Error::invalid("poi range is reversed"));
        }
        self.center.validate()
    }
}

/// The four ingest files plus the ground truth used to generate them.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCity {
    pub blocks_geojson: String,
    pub pois_geojson: String,
    pub occupancy_csv: String,
    pub stats_csv: String,
    pub archetypes: BTreeMap<String, Archetype>,
    pub monitored: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticPaths {
    pub blocks: PathBuf,
    pub pois: PathBuf,
    pub occupancy: PathBuf,
    pub stats: PathBuf,
}

impl SyntheticCity {
    pub fn write_to(&self, dir: &Path) -> Result<SyntheticPaths> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let paths = SyntheticPaths {
            blocks: dir.join("blocks.geojson"),
            pois: dir.join("pois.geojson"),
            occupancy: dir.join("occupancy.csv"),
            stats: dir.join("time_spent.csv"),
        };
        for (path, body) in [
            (&paths.blocks, &self.blocks_geojson),
            (&paths.pois, &self.pois_geojson),
            (&paths.occupancy, &self.occupancy_csv),
            (&paths.stats, &self.stats_csv),
        ] {
            std::fs::write(path, body).map_err(|e| Error::io(path, e))?;
        }
        Ok(paths)
    }
}

fn round7(x: f64) -> f64 {
    (x * 1e7).round() / 1e7
}

fn offset(center: LatLon, north_m: f64, east_m: f64) -> LatLon {
    let lat = center.lat + (north_m / EARTH_RADIUS_M).to_degrees();
    let lon = center.lon + (east_m / (EARTH_RADIUS_M * center.lat.to_radians().cos())).to_degrees();
    LatLon { lat, lon }
}

fn point(p: LatLon) -> Value {
    json!([round7(p.lon), round7(p.lat)])
}

struct SynthBlock {
    id: String,
    centroid: LatLon,
    archetype: Archetype,
    monitored: bool,
}

pub fn generate_synthetic_city(config: &SyntheticCityConfig) -> Result<SyntheticCity> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let side = (config.n_blocks as f64).sqrt().ceil() as usize;
    let half = (side as f64 - 1.0) / 2.0;
    let jitter = config.spacing_m * 0.12;

    let positions: Vec<(f64, f64)> = (0..config.n_blocks)
        .map(|i| {
            let (row, col) = ((i / side) as f64, (i % side) as f64);
            (
                (row - half) * config.spacing_m + rng.random_range(-jitter..=jitter),
                (col - half) * config.spacing_m + rng.random_range(-jitter..=jitter),
            )
        })
        .collect();

    let extent = half * config.spacing_m;
    let anchors: Vec<((f64, f64), Archetype)> = (0..2 * config.n_archetypes)
        .map(|j| {
            let a = (rng.random_range(-extent..=extent), rng.random_range(-extent..=extent));
            (a, Archetype::ALL[j % config.n_archetypes])
        })
        .collect();

    let n_monitored = ((config.n_blocks as f64 * config.monitored_fraction).round() as usize).min(config.n_blocks);
    let mut monitored = vec![false; config.n_blocks];
    for i in sample(&mut rng, config.n_blocks, n_monitored) {
        monitored[i] = true;
    }

    let width = config.n_blocks.to_string().len();
    let blocks: Vec<SynthBlock> = positions
        .iter()
        .enumerate()
        .map(|(i, &(n, e))| {
            let archetype = anchors
                .iter()
                .min_by(|a, b| {
                    let d = |p: &(f64, f64)| (p.0 - n).powi(2) + (p.1 - e).powi(2);
                    d(&a.0).total_cmp(&d(&b.0))
                })
                .expect("at least one anchor")
                .1;
            SynthBlock {
                id: format!("b{i:0width$}"),
                centroid: offset(config.center, n, e),
                archetype,
                monitored: monitored[i],
            }
        })
        .collect();

    let blocks_geojson = blocks_feature_collection(&blocks, config.spacing_m * 0.3);
    let pois_geojson = pois_feature_collection(&blocks, config, &mut rng)?;
    let occupancy_csv = occupancy_records(&blocks, config, &mut rng)?;

    Ok(SyntheticCity {
        blocks_geojson,
        pois_geojson,
        occupancy_csv,
        stats_csv: time_spent_table().to_csv()?,
        archetypes: blocks.iter().map(|b| (b.id.clone(), b.archetype)).collect(),
        monitored: blocks.iter().filter(|b| b.monitored).map(|b| b.id.clone()).collect(),
    })
}

fn blocks_feature_collection(blocks: &[SynthBlock], half_length_m: f64) -> String {
    let features: Vec<Value> = blocks
        .iter()
        .map(|b| {
            let west = offset(b.centroid, 0.0, -half_length_m);
            let east = offset(b.centroid, 0.0, half_length_m);
            json!({
                "type": "Feature",
                "geometry": {"type": "LineString", "coordinates": [point(west), point(east)]},
                "properties": {"block_id": b.id, "has_parking_data": b.monitored},
            })
        })
        .collect();
    let fc = json!({"type": "FeatureCollection", "features": features});
    serde_json::to_string_pretty(&fc).expect("json values serialize") + "\n"
}

/// Reduced-unit areas for amenities missing from the polygon table.
fn area_base(amenity: &str, bases: &mut BTreeMap<String, f64>, rng: &mut ChaCha8Rng) -> f64 {
    *bases
        .entry(amenity.to_string())
        .or_insert_with(|| rng.random_range(10.0..300.0))
}

fn pois_feature_collection(blocks: &[SynthBlock], config: &SyntheticCityConfig, rng: &mut ChaCha8Rng) -> Result<String> {
    let spread = Normal::new(0.0, 0.3).map_err(|e| Error::invalid(e.to_string()))?;
    let mut bases = BTreeMap::new();
    let mut features = Vec::new();
    for b in blocks {
        let named = rng.random_range(config.pois_per_block.0..=config.pois_per_block.1);
        let unnamed = rng.random_range(0..=2usize);
        for k in 0..named + unnamed {
            let r = 40.0 * rng.random::<f64>().sqrt();
            let theta = rng.random_range(0.0..std::f64::consts::TAU);
            let pos = offset(b.centroid, r * theta.sin(), r * theta.cos());
            let mut properties = serde_json::Map::new();
            if k < named {
                let archetype = if rng.random::<f64>() < config.amenity_mixing {
                    Archetype::ALL[rng.random_range(0..config.n_archetypes)]
                } else {
                    b.archetype
                };
                let palette = archetype.palette();
                let amenity = palette[rng.random_range(0..palette.len())];
                let area = area_base(amenity, &mut bases, rng) * 20.0 * Distribution::<f64>::sample(&spread, rng).exp();
                properties.insert("amenity".into(), json!(amenity));
                properties.insert("area_m2".into(), json!((area * 10.0).round() / 10.0));
            }
            features.push(json!({
                "type": "Feature",
                "id": format!("{}-p{k}", b.id),
                "geometry": {"type": "Point", "coordinates": point(pos)},
                "properties": properties,
            }));
        }
    }
    let fc = json!({"type": "FeatureCollection", "features": features});
    Ok(serde_json::to_string_pretty(&fc).expect("json values serialize") + "\n")
}

fn occupancy_records(blocks: &[SynthBlock], config: &SyntheticCityConfig, rng: &mut ChaCha8Rng) -> Result<String> {
    let noise = Normal::new(0.0, config.noise).map_err(|e| Error::invalid(e.to_string()))?;
    let level = Normal::new(0.0, config.noise / 2.0).map_err(|e| Error::invalid(e.to_string()))?;
    struct Lot<'a> {
        block: &'a SynthBlock,
        spots: u32,
        price: f64,
        shift: f64,
    }
    let lots: Vec<Lot> = blocks
        .iter()
        .filter(|b| b.monitored)
        .map(|block| {
            let (lo, hi) = block.archetype.price_range();
            Lot {
                block,
                spots: rng.random_range(10..=40),
                price: (rng.random_range(lo..=hi) * 4.0).round() / 4.0,
                shift: level.sample(rng),
            }
        })
        .collect();

    let start = config.start.and_hms_opt(0, 0, 0).expect("midnight exists");
    let mut records = Vec::new();
    for h in 0..i64::from(config.days) * 24 {
        let t = start + Duration::hours(h);
        for lot in &lots {
            if rng.random::<f64>() >= config.reporting {
                continue;
            }
            let expected = lot.block.archetype.curve(t.weekday(), (h % 24) as u32);
            let rate = (expected + lot.shift + noise.sample(rng)).clamp(0.0, 1.0);
            records.push(OccupancyRecord {
                block_id: lot.block.id.clone(),
                timestamp: t,
                price_rate: lot.price,
                total_spots: lot.spots,
                occupied: (rate * f64::from(lot.spots)).round() as u32,
            });
        }
    }
    let mut buf = Vec::new();
    write_occupancy_csv(&mut buf, &records)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

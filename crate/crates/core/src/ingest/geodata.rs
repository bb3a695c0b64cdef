use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::stats::{AmenityStats, AmenityStatsTable, Basis};
use super::{LatLon, EARTH_RADIUS_M};
use crate::error::{Error, Result};
use crate::represent::CategoryScheme;

/// Area values are divided by this factor before use as amenity statistics.
pub const AREA_REDUCTION: f64 = 20.0;

/// A street block, the smallest location unit of the occupancy data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub block_id: String,
    pub centroid: LatLon,
    pub has_parking_data: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<Value>,
}

/// A geolocated point of interest, possibly carrying an amenity type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Poi {
    pub poi_id: String,
    pub position: LatLon,
    pub amenity: Option<String>,
    pub area_m2: Option<f64>,
}

impl Poi {
    /// POIs without an amenity take no part in similarity computations.
    pub fn is_usable(&self) -> bool {
        self.amenity.is_some()
    }
}

pub fn parse_geodata(blocks_path: &Path, pois_path: &Path) -> Result<(Vec<Block>, Vec<Poi>)> {
    let read = |p: &Path| fs::read_to_string(p).map_err(|e| Error::io(p, e));
    Ok((parse_blocks(&read(blocks_path)?)?, parse_pois(&read(pois_path)?)?))
}

pub fn parse_blocks(geojson: &str) -> Result<Vec<Block>> {
    let features = features(geojson)?;
    let mut seen = std::collections::BTreeSet::new();
    let mut blocks = Vec::with_capacity(features.len());
    for (i, feature) in features.iter().enumerate() {
        let props = feature.get("properties").and_then(Value::as_object);
        let block_id = props
            .and_then(|p| p.get("block_id"))
            .and_then(id_string)
            .ok_or_else(|| Error::GeoJson(format!("feature {i}: missing block_id")))?;
        let has_parking_data = props
            .and_then(|p| p.get("has_parking_data"))
            .and_then(Value::as_bool)
            .ok_or_else(|| {
                Error::GeoJson(format!("block {block_id}: missing boolean has_parking_data"))
            })?;
        let geometry = feature
            .get("geometry")
            .filter(|g| !g.is_null())
            .ok_or_else(|| Error::GeoJson(format!("block {block_id}: missing geometry")))?;
        let centroid = vertex_mean(&vertices(geometry)?)?;
        if !seen.insert(block_id.clone()) {
            return Err(Error::GeoJson(format!("duplicate block_id {block_id}")));
        }
        blocks.push(Block {
            block_id,
            centroid,
            has_parking_data,
            geometry: Some(geometry.clone()),
        });
    }
    Ok(blocks)
}

pub fn parse_pois(geojson: &str) -> Result<Vec<Poi>> {
    let features = features(geojson)?;
    let mut pois = Vec::with_capacity(features.len());
    for (i, feature) in features.iter().enumerate() {
        let props = feature.get("properties").and_then(Value::as_object);
        let poi_id = feature
            .get("id")
            .and_then(id_string)
            .or_else(|| props.and_then(|p| p.get("poi_id")).and_then(id_string))
            .unwrap_or_else(|| format!("poi-{i}"));
        let geometry = feature
            .get("geometry")
            .filter(|g| !g.is_null())
            .ok_or_else(|| Error::GeoJson(format!("poi {poi_id}: missing geometry")))?;
        let position = vertex_mean(&vertices(geometry)?)?;
        let amenity = props
            .and_then(|p| p.get("amenity"))
            .and_then(Value::as_str)
            .map(|a| a.trim().to_lowercase())
            .filter(|a| !a.is_empty());
        let area_m2 = match props.and_then(|p| p.get("area_m2")).and_then(Value::as_f64) {
            Some(a) if a < 0.0 => {
                return Err(Error::GeoJson(format!("poi {poi_id}: negative area_m2")))
            }
            Some(a) => Some(a),
            None => polygon_area_m2(geometry),
        };
        pois.push(Poi {
            poi_id,
            position,
            amenity,
            area_m2,
        });
    }
    Ok(pois)
}

/// Per-amenity area statistics from polygon POIs, reduced by 20x.
pub fn area_stats_from_pois(pois: &[Poi]) -> Result<AmenityStatsTable> {
    let mut areas: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for poi in pois {
        if let (Some(amenity), Some(area)) = (poi.amenity.as_deref(), poi.area_m2) {
            if area > 0.0 {
                areas.entry(amenity).or_default().push(area / AREA_REDUCTION);
            }
        }
    }
    let scheme = CategoryScheme::for_basis(Basis::Area);
    let mut table = AmenityStatsTable::new(Basis::Area);
    for (amenity, values) in areas {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let stdev = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        table.insert(AmenityStats {
            amenity: amenity.to_string(),
            mean,
            stdev,
            category: scheme.categorize(mean),
        })?;
    }
    Ok(table)
}

fn features(geojson: &str) -> Result<Vec<Value>> {
    let root: Value =
        serde_json::from_str(geojson).map_err(|e| Error::GeoJson(e.to_string()))?;
    if root.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(Error::GeoJson("expected a FeatureCollection".into()));
    }
    match root.get("features") {
        Some(Value::Array(f)) => Ok(f.clone()),
        _ => Err(Error::GeoJson("FeatureCollection without features array".into())),
    }
}

fn id_string(v: &Value) -> Option<String> {
    match v {
        Value::String(s) if !s.is_empty() => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn position(v: &Value) -> Result<LatLon> {
    let pair = v
        .as_array()
        .filter(|a| a.len() >= 2)
        .ok_or_else(|| Error::GeoJson("position must be [lon, lat]".into()))?;
    let (lon, lat) = match (pair[0].as_f64(), pair[1].as_f64()) {
        (Some(lon), Some(lat)) => (lon, lat),
        _ => return Err(Error::GeoJson("non-numeric coordinate".into())),
    };
    LatLon::new(lat, lon)
}

fn ring(v: &Value) -> Result<Vec<LatLon>> {
    let mut pts = v
        .as_array()
        .ok_or_else(|| Error::GeoJson("expected coordinate array".into()))?
        .iter()
        .map(position)
        .collect::<Result<Vec<_>>>()?;
    if pts.len() > 1 && pts.first() == pts.last() {
        pts.pop();
    }
    Ok(pts)
}

/// Flattened vertex list of a geometry. Closing vertices of rings are dropped.
fn vertices(geometry: &Value) -> Result<Vec<LatLon>> {
    let kind = geometry.get("type").and_then(Value::as_str).unwrap_or_default();
    let coords = geometry
        .get("coordinates")
        .ok_or_else(|| Error::GeoJson(format!("{kind} geometry without coordinates")))?;
    let nested = |v: &Value| -> Result<Vec<Value>> {
        v.as_array()
            .cloned()
            .ok_or_else(|| Error::GeoJson(format!("malformed {kind} coordinates")))
    };
    let mut out = Vec::new();
    match kind {
        "Point" => out.push(position(coords)?),
        "MultiPoint" | "LineString" => {
            for p in nested(coords)? {
                out.push(position(&p)?);
            }
        }
        "MultiLineString" => {
            for line in nested(coords)? {
                for p in nested(&line)? {
                    out.push(position(&p)?);
                }
            }
        }
        "Polygon" => {
            // outer ring only
            if let Some(outer) = nested(coords)?.first() {
                out.extend(ring(outer)?);
            }
        }
        "MultiPolygon" => {
            for poly in nested(coords)? {
                if let Some(outer) = nested(&poly)?.first() {
                    out.extend(ring(outer)?);
                }
            }
        }
        other => return Err(Error::GeoJson(format!("unsupported geometry type `{other}`"))),
    }
    Ok(out)
}

fn vertex_mean(pts: &[LatLon]) -> Result<LatLon> {
    if pts.is_empty() {
        return Err(Error::GeoJson("geometry without vertices".into()));
    }
    let n = pts.len() as f64;
    let lat = pts.iter().map(|p| p.lat).sum::<f64>() / n;
    let lon = pts.iter().map(|p| p.lon).sum::<f64>() / n;
    LatLon::new(lat, lon)
}

/// Planar ring area on a local equirectangular projection.
fn ring_area_m2(pts: &[LatLon]) -> f64 {
    if pts.len() < 3 {
        return 0.0;
    }
    let lat0 = (pts.iter().map(|p| p.lat).sum::<f64>() / pts.len() as f64).to_radians();
    let xy: Vec<(f64, f64)> = pts
        .iter()
        .map(|p| {
            (
                EARTH_RADIUS_M * p.lon.to_radians() * lat0.cos(),
                EARTH_RADIUS_M * p.lat.to_radians(),
            )
        })
        .collect();
    let twice: f64 = (0..xy.len())
        .map(|i| {
            let (x1, y1) = xy[i];
            let (x2, y2) = xy[(i + 1) % xy.len()];
            x1 * y2 - x2 * y1
        })
        .sum();
    twice.abs() / 2.0
}

fn polygon_area_m2(geometry: &Value) -> Option<f64> {
    let kind = geometry.get("type")?.as_str()?;
    let coords = geometry.get("coordinates")?.as_array()?;
    let poly_area = |rings: &Vec<Value>| -> Option<f64> {
        let mut total = 0.0;
        for (i, r) in rings.iter().enumerate() {
            let a = ring_area_m2(&ring(r).ok()?);
            total += if i == 0 { a } else { -a };
        }
        Some(total.max(0.0))
    };
    match kind {
        "Polygon" => poly_area(coords),
        "MultiPolygon" => coords
            .iter()
            .map(|p| p.as_array().and_then(poly_area))
            .sum(),
        _ => None,
    }
}

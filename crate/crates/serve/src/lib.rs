//! Read-only HTTP API over a finished workspace.
//!
//! Cluster keys in paths and feature ids are `<group>-<id>`, for example
//! `without_data-3`; a bare number means the unmonitored cluster with that id.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use chrono::NaiveDateTime;
use parkcast::estimate::{percent, EstimateTable};
use parkcast::geocluster::{ClusterPartition, Group};
use parkcast::ingest::{Basis, LatLon};
use parkcast::similarity::{Metric, SimilarityMatrix};
use parkcast::workspace::{Pairing, Representations, Workspace, SCHEMA_VERSION};
use parkcast::Error;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::cors::{Any, CorsLayer};

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
        }
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, message)
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    fn incomplete(what: &str) -> Self {
        Self::new(StatusCode::CONFLICT, format!("workspace incomplete: {what} missing"))
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        match e {
            Error::Missing(what) => Self::incomplete(&what),
            other => Self::new(StatusCode::INTERNAL_SERVER_ERROR, other.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({"error": self.message}))).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

#[derive(Debug, Clone, Serialize)]
pub struct EstimateRowJson {
    pub source_id: usize,
    pub similarity: f64,
    pub lo: i64,
    pub hi: i64,
    pub eii_lo: Option<i64>,
    pub eii_hi: Option<i64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateJson {
    pub cluster: String,
    pub timestamp: String,
    pub metric: Metric,
    pub basis: Basis,
    pub rows: Vec<EstimateRowJson>,
}

fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

impl EstimateJson {
    fn from_table(table: &EstimateTable, basis: Basis) -> Self {
        EstimateJson {
            cluster: cluster_key(Group::WithoutData, table.target_cluster),
            timestamp: table.timestamp.format("%Y-%m-%dT%H:%M:%S").to_string(),
            metric: table.metric,
            basis,
            rows: table
                .rows
                .iter()
                .map(|r| EstimateRowJson {
                    source_id: r.interval.source_cluster,
                    similarity: round4(r.interval.similarity),
                    lo: percent(r.interval.lo),
                    hi: percent(r.interval.hi),
                    eii_lo: r.intersection.map(|s| percent(s.0)),
                    eii_hi: r.intersection.map(|s| percent(s.1)),
                })
                .collect(),
        }
    }
}

type EstimateKey = (usize, Metric, Basis, NaiveDateTime);

/// Everything the endpoints read, loaded once. Missing stages stay `None`
/// and their endpoints answer 409.
pub struct AppState {
    workspace: Workspace,
    partition: Option<ClusterPartition>,
    centroids: BTreeMap<String, LatLon>,
    representations: Option<Representations>,
    model_index: Option<String>,
    similarities: BTreeMap<(Metric, Basis, bool), SimilarityMatrix>,
    estimates: BTreeMap<EstimateKey, EstimateJson>,
}

fn optional<T>(r: parkcast::Result<T>) -> parkcast::Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::Missing(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

impl AppState {
    /// Loads the workspace and precomputes estimates for the configured times.
    pub fn load(root: impl Into<PathBuf>) -> parkcast::Result<Self> {
        let workspace = Workspace::open(root)?;
        let partition = optional(workspace.partition())?;
        let centroids = match optional(workspace.blocks())? {
            Some(blocks) => blocks.into_iter().map(|b| (b.block_id, b.centroid)).collect(),
            None => BTreeMap::new(),
        };
        let representations = optional(workspace.representations())?;
        let model_index = optional(workspace.read("models/index.json"))?;
        let mut similarities = BTreeMap::new();
        for basis in [Basis::TimeSpent, Basis::Area] {
            for metric in Metric::ALL {
                for (monitored, pairing) in [(false, Pairing::Transfer), (true, Pairing::Monitored)] {
                    if let Some(m) = optional(workspace.load_similarity(metric, basis, pairing))? {
                        similarities.insert((metric, basis, monitored), m);
                    }
                }
            }
        }
        let mut state = AppState {
            workspace,
            partition,
            centroids,
            representations,
            model_index,
            similarities,
            estimates: BTreeMap::new(),
        };
        state.precompute()?;
        Ok(state)
    }

    fn precompute(&mut self) -> parkcast::Result<()> {
        let (Some(partition), Some(_)) = (&self.partition, &self.model_index) else {
            return Ok(());
        };
        let times = self.workspace.estimate_times()?;
        let targets: Vec<usize> = partition.clusters_without.iter().map(|c| c.cluster_id).collect();
        let available: Vec<(Metric, Basis)> = self
            .similarities
            .keys()
            .filter(|k| !k.2)
            .map(|k| (k.0, k.1))
            .collect();
        for (metric, basis) in available {
            for &target in &targets {
                for table in self.workspace.estimate(target, &times, metric, basis)? {
                    self.estimates
                        .insert((target, metric, basis, table.timestamp), EstimateJson::from_table(&table, basis));
                }
            }
        }
        Ok(())
    }

    pub fn is_complete(&self) -> bool {
        self.partition.is_some()
            && self.representations.is_some()
            && self.model_index.is_some()
            && !self.similarities.is_empty()
    }
}

pub fn cluster_key(group: Group, id: usize) -> String {
    format!("{}-{id}", group.as_str())
}

fn parse_cluster_key(key: &str) -> Option<(Group, usize)> {
    if let Ok(id) = key.parse() {
        return Some((Group::WithoutData, id));
    }
    let (group, id) = key.rsplit_once('-')?;
    Some((group.parse().ok()?, id.parse().ok()?))
}

/// Monotone chain over (lon, lat); counter-clockwise, without the closing
/// vertex. Fewer than three hull vertices means the points are degenerate.
pub fn convex_hull(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut p = points.to_vec();
    p.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    p.dedup();
    if p.len() < 3 {
        return p;
    }
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * p.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> = if pass == 0 { Box::new(p.iter()) } else { Box::new(p.iter().rev()) };
        for &q in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], q) <= 0.0 {
                hull.pop();
            }
            hull.push(q);
        }
        hull.pop();
    }
    hull
}

fn cluster_geometry(points: &[[f64; 2]]) -> Value {
    let hull = convex_hull(points);
    if hull.len() >= 3 {
        let mut ring = hull.clone();
        ring.push(hull[0]);
        json!({"type": "Polygon", "coordinates": [ring]})
    } else {
        json!({"type": "MultiPoint", "coordinates": points})
    }
}

async fn health(State(state): State<Arc<AppState>>) -> Json<Value> {
    Json(json!({
        "status": "ok",
        "version": SCHEMA_VERSION,
        "complete": state.is_complete(),
    }))
}

async fn clusters(State(state): State<Arc<AppState>>) -> ApiResult<Json<Value>> {
    let partition = state.partition.as_ref().ok_or_else(|| ApiError::incomplete("partition.json"))?;
    let reps = state
        .representations
        .as_ref()
        .and_then(|r| r.get(&Basis::TimeSpent))
        .ok_or_else(|| ApiError::incomplete("representations.json"))?;
    let mut features = Vec::new();
    for c in partition.clusters_with.iter().chain(&partition.clusters_without) {
        let points: Vec<[f64; 2]> = c
            .block_ids
            .iter()
            .filter_map(|b| state.centroids.get(b))
            .map(|p| [p.lon, p.lat])
            .collect();
        let counts = reps.get(c.group, c.cluster_id).map(|r| r.vector.counts.clone()).unwrap_or_default();
        let categories: serde_json::Map<String, Value> =
            counts.iter().enumerate().map(|(i, n)| ((i + 1).to_string(), json!(n))).collect();
        features.push(json!({
            "type": "Feature",
            "id": cluster_key(c.group, c.cluster_id),
            "geometry": cluster_geometry(&points),
            "properties": {
                "cluster_id": c.cluster_id,
                "group": c.group.as_str(),
                "block_count": c.block_ids.len(),
                "categories": categories,
            },
        }));
    }
    Ok(Json(json!({"type": "FeatureCollection", "features": features})))
}

#[derive(Debug, Deserialize)]
pub struct EstimateQuery {
    t: Option<String>,
    metric: Option<String>,
    basis: Option<String>,
}

fn parse_time(raw: &str) -> Option<NaiveDateTime> {
    let raw = raw.trim().trim_end_matches('Z');
    ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M:%S", "%Y-%m-%d %H:%M"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(raw, f).ok())
}

fn parse_param<T: std::str::FromStr>(raw: Option<&str>, default: T, what: &str) -> ApiResult<T> {
    match raw {
        None => Ok(default),
        Some(s) => s.parse().map_err(|_| ApiError::bad_request(format!("unknown {what} {s:?}"))),
    }
}

async fn estimates(
    State(state): State<Arc<AppState>>,
    Path(key): Path<String>,
    Query(q): Query<EstimateQuery>,
) -> ApiResult<Json<Value>> {
    let partition = state.partition.as_ref().ok_or_else(|| ApiError::incomplete("partition.json"))?;
    let (group, id) = parse_cluster_key(&key).ok_or_else(|| ApiError::not_found(format!("unknown cluster {key}")))?;
    if partition.cluster(group, id).is_none() {
        return Err(ApiError::not_found(format!("unknown cluster {key}")));
    }
    if group == Group::WithData {
        return Err(ApiError::bad_request(format!("cluster {key} has sensor data; estimates are for unmonitored clusters")));
    }
    let metric: Metric = parse_param(q.metric.as_deref(), Metric::Cosine, "metric")?;
    let basis: Basis = parse_param(q.basis.as_deref(), Basis::TimeSpent, "basis")?;
    if !state.similarities.contains_key(&(metric, basis, false)) {
        return Err(ApiError::not_found(format!("no {metric} similarity on basis {basis}")));
    }
    let times = match &q.t {
        Some(raw) => vec![parse_time(raw).ok_or_else(|| ApiError::bad_request(format!("unparseable time {raw:?}")))?],
        None => state.workspace.estimate_times()?,
    };
    let mut out = Vec::with_capacity(times.len());
    for t in &times {
        match state.estimates.get(&(id, metric, basis, *t)) {
            Some(e) => out.push(serde_json::to_value(e).expect("serializable")),
            None => {
                let tables = state.workspace.estimate(id, &[*t], metric, basis)?;
                out.push(serde_json::to_value(EstimateJson::from_table(&tables[0], basis)).expect("serializable"));
            }
        }
    }
    Ok(Json(if q.t.is_some() { out.remove(0) } else { Value::Array(out) }))
}

#[derive(Debug, Deserialize)]
pub struct SimilarityQuery {
    metric: Option<String>,
    basis: Option<String>,
    pairing: Option<String>,
}

async fn similarity(State(state): State<Arc<AppState>>, Query(q): Query<SimilarityQuery>) -> ApiResult<Json<Value>> {
    let (Some(metric), Some(basis)) = (q.metric.as_deref(), q.basis.as_deref()) else {
        return Err(ApiError::bad_request("metric and basis are required"));
    };
    let missing = || ApiError::not_found(format!("no similarity for metric {metric:?} and basis {basis:?}"));
    let metric: Metric = metric.parse().map_err(|_| missing())?;
    let basis: Basis = basis.parse().map_err(|_| missing())?;
    let monitored = match q.pairing.as_deref() {
        None | Some("transfer") => false,
        Some("monitored") => true,
        Some(other) => return Err(ApiError::bad_request(format!("unknown pairing {other:?}"))),
    };
    let m = state.similarities.get(&(metric, basis, monitored)).ok_or_else(missing)?;
    Ok(Json(json!({
        "metric": m.metric,
        "basis": m.basis,
        "sources": m.sources,
        "targets": m.targets,
        "values": m.values,
    })))
}

async fn models(State(state): State<Arc<AppState>>) -> ApiResult<Response> {
    let body = state.model_index.clone().ok_or_else(|| ApiError::incomplete("models/index.json"))?;
    Ok(([(header::CONTENT_TYPE, "application/json")], body).into_response())
}

pub fn router(state: Arc<AppState>) -> Router {
    let cors = CorsLayer::new().allow_origin(Any).allow_methods([Method::GET]);
    Router::new()
        .route("/api/health", get(health))
        .route("/api/clusters", get(clusters))
        .route("/api/clusters/{id}/estimates", get(estimates))
        .route("/api/similarity", get(similarity))
        .route("/api/models", get(models))
        .layer(cors)
        .with_state(state)
}

pub async fn serve(root: impl Into<PathBuf>, addr: SocketAddr) -> std::io::Result<()> {
    let state = AppState::load(root).map_err(std::io::Error::other)?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(Arc::new(state))).await
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys() {
        assert_eq!(parse_cluster_key("without_data-3"), Some((Group::WithoutData, 3)));
        assert_eq!(parse_cluster_key("with_data-0"), Some((Group::WithData, 0)));
        assert_eq!(parse_cluster_key("7"), Some((Group::WithoutData, 7)));
        assert_eq!(parse_cluster_key("nope-1"), None);
        assert_eq!(parse_cluster_key("with_data-x"), None);
        assert_eq!(cluster_key(Group::WithData, 2), "with_data-2");
    }

    #[test]
    fn times() {
        let t = parse_time("2017-11-04T12:00:00").unwrap();
        assert_eq!(parse_time("2017-11-04T12:00"), Some(t));
        assert_eq!(parse_time("2017-11-04 12:00:00Z"), Some(t));
        assert_eq!(parse_time("noon"), None);
    }

    #[test]
    fn hull_of_a_square_with_interior_point() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5], [1.0, 0.5]];
        assert_eq!(convex_hull(&pts), vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]);
        assert_eq!(convex_hull(&[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]).len(), 2);
        assert_eq!(cluster_geometry(&[[0.0, 0.0]])["type"], "MultiPoint");
    }
}

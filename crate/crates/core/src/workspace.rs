//! On-disk layout of a pipeline run and the stages that fill it.
//!
//! ```text
//! workspace.json                 stage parameters
//! inputs/                        copies of the ingested files, area.csv derived from POIs
//! ingest_report.json
//! amenity_index.json
//! partition.json
//! training/with_data/<id>.csv
//! models/<id>.model, models/index.json
//! representations.json
//! similarity/<metric>-<basis>.csv            monitored x unmonitored
//! similarity/with_data/<metric>-<basis>.csv  monitored x monitored
//! evaluation/
//! ```
//!
//! Every file is a pure function of the inputs and parameters, so reruns are
//! byte-identical.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{NaiveDate, NaiveDateTime};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::aggregate::{aggregate_cluster, extract_features, read_training_csv, unaggregated_points, write_training_csv, AggregatedPoint, AggregationDiagnostics, Datapoints, OccupancyMode};
use crate::error::{Error, Result};
use crate::estimate::{estimate_for_target, timestamps_for, EstimateTable, LotInputs, DEFAULT_HOURS};
use crate::evaluate::{
    best_method_fractions, correlate_similarity_errors, extended_total_models, train_sources, transfer_errors,
    CorrelationReport, ExtendedComparison, MonitoredCluster, TransferErrorMatrix,
};
use crate::geocluster::{partition_city, ClusterPartition, Group, DEFAULT_RATIO};
use crate::ingest::{
    area_stats_from_pois, load_amenity_stats, match_amenities, parse_blocks, parse_occupancy_csv, parse_pois, AmenityStatsTable, Basis,
    Block, BlockAmenityIndex, OccupancyFormat, OccupancyRecord, Poi,
};
use crate::learn::{Learner, TrainedModel};
use crate::represent::{represent_cluster, support_spec, ClusterRepresentation, SupportSpec};
use crate::similarity::{Metric, SimilarityMatrix};

pub const SCHEMA_VERSION: &str = "parkcast-workspace/1";

const CONFIG_FILE: &str = "workspace.json";
const OCCUPANCY: &str = "inputs/occupancy.csv";
const BLOCKS: &str = "inputs/blocks.geojson";
const POIS: &str = "inputs/pois.geojson";
const TIME_SPENT: &str = "inputs/time_spent.csv";
const AREA: &str = "inputs/area.csv";
const INGEST_REPORT: &str = "ingest_report.json";
const AMENITY_INDEX: &str = "amenity_index.json";
const PARTITION: &str = "partition.json";
const TRAINING_DIR: &str = "training/with_data";
const MODELS_DIR: &str = "models";
const MODEL_INDEX: &str = "models/index.json";
const REPRESENTATIONS: &str = "representations.json";
const SIMILARITY_DIR: &str = "similarity";
const EVALUATION_DIR: &str = "evaluation";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionParams {
    pub k_with: usize,
    pub ratio: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingParams {
    pub learner: Learner,
    pub datapoints: Datapoints,
    pub seed: u64,
}

/// Parameters of each completed stage plus the estimate query defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkspaceConfig {
    pub version: String,
    pub merge_distance_m: Option<f64>,
    pub partition: Option<PartitionParams>,
    pub training: Option<TrainingParams>,
    pub estimate_date: NaiveDate,
    pub estimate_hours: Vec<u32>,
    pub lot_inputs: LotInputs,
}

impl Default for WorkspaceConfig {
    fn default() -> Self {
        WorkspaceConfig {
            version: SCHEMA_VERSION.to_string(),
            merge_distance_m: None,
            partition: None,
            training: None,
            estimate_date: NaiveDate::from_ymd_opt(2017, 11, 4).expect("valid date"),
            estimate_hours: DEFAULT_HOURS.to_vec(),
            lot_inputs: LotInputs::default(),
        }
    }
}

/// Source files for the ingest stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputPaths {
    pub occupancy: PathBuf,
    pub blocks: PathBuf,
    pub pois: PathBuf,
    pub time_spent: PathBuf,
    /// Derived from POI areas when absent.
    pub area: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedRow {
    pub line: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub records: usize,
    pub rejected: Vec<RejectedRow>,
    pub blocks: usize,
    pub monitored_blocks: usize,
    pub pois: usize,
    pub usable_pois: usize,
    pub merge_distance_m: f64,
    /// Matched amenities missing from the time-spent table.
    pub unknown_amenities: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelIndexEntry {
    pub cluster_id: usize,
    pub file: String,
    pub learner: Learner,
    pub hyperparameters: crate::learn::Hyperparameters,
    pub cv_rmse: f64,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelIndex {
    pub learner: Learner,
    pub datapoints: Datapoints,
    pub seed: u64,
    pub models: Vec<ModelIndexEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisRepresentations {
    pub support: SupportSpec,
    pub clusters: Vec<ClusterRepresentation>,
}

impl BasisRepresentations {
    pub fn group(&self, group: Group) -> Vec<ClusterRepresentation> {
        self.clusters.iter().filter(|c| c.group == group).cloned().collect()
    }

    pub fn get(&self, group: Group, id: usize) -> Option<&ClusterRepresentation> {
        self.clusters.iter().find(|c| c.group == group && c.cluster_id == id)
    }
}

pub type Representations = BTreeMap<Basis, BasisRepresentations>;

/// Which cluster pairs a similarity file covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pairing {
    /// Monitored sources, unmonitored targets.
    Transfer,
    /// Monitored sources and targets.
    Monitored,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationConfig {
    pub learners: Vec<Learner>,
    /// Learner whose errors are correlated with similarities.
    pub primary: Learner,
    pub train_on: Datapoints,
    pub test_on: Datapoints,
    pub seed: u64,
    pub pooled: bool,
    /// Also run the other three train/test datapoint combinations.
    pub ablation: bool,
    /// Also compare leave-one-out total models with and without descriptors.
    pub extended: bool,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            learners: vec![Learner::DecisionTree, Learner::Gbt],
            primary: Learner::Gbt,
            train_on: Datapoints::Aggregate,
            test_on: Datapoints::Aggregate,
            seed: 42,
            pooled: false,
            ablation: false,
            extended: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisCorrelation {
    pub basis: Basis,
    pub report: CorrelationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatapointRun {
    pub train_on: Datapoints,
    pub test_on: Datapoints,
    pub mean_rmse: f64,
    pub correlations: Vec<BasisCorrelation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub k_with: usize,
    pub merge_distance_m: Option<f64>,
    pub config: EvaluationConfig,
    pub best_methods: Vec<(Learner, f64)>,
    pub mean_errors: Vec<(Learner, f64)>,
    pub runs: Vec<DatapointRun>,
    pub extended: Option<ExtendedComparison>,
}

impl EvaluationReport {
    /// The run with the configured datapoints.
    pub fn main_run(&self) -> &DatapointRun {
        self.runs
            .iter()
            .find(|r| r.train_on == self.config.train_on && r.test_on == self.config.test_on)
            .expect("configured run is always present")
    }

    pub fn correlation(&self, basis: Basis, metric: Metric) -> Option<&crate::evaluate::MetricCorrelation> {
        self.main_run()
            .correlations
            .iter()
            .find(|c| c.basis == basis)
            .and_then(|c| c.report.metric(metric))
    }
}

/// Everything needed to go from raw files to an evaluated workspace.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub inputs: InputPaths,
    pub merge_distance_m: f64,
    pub k_with: usize,
    pub ratio: f64,
    pub seed: u64,
    pub learner: Learner,
    pub datapoints: Datapoints,
    pub evaluation: Option<EvaluationConfig>,
}

impl PipelineConfig {
    pub fn new(inputs: InputPaths) -> Self {
        PipelineConfig {
            inputs,
            merge_distance_m: 100.0,
            k_with: 8,
            ratio: DEFAULT_RATIO,
            seed: 42,
            learner: Learner::Gbt,
            datapoints: Datapoints::Aggregate,
            evaluation: Some(EvaluationConfig::default()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Workspace {
    root: PathBuf,
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("artifact types serialize") + "\n"
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| format!("{v:.4}"))
}

impl Workspace {
    /// Opens `root`, creating it and a default config when missing.
    pub fn create(root: impl Into<PathBuf>) -> Result<Self> {
        let ws = Workspace { root: root.into() };
        fs::create_dir_all(&ws.root).map_err(|e| Error::io(&ws.root, e))?;
        if !ws.path(CONFIG_FILE).exists() {
            ws.save_config(&WorkspaceConfig::default())?;
        }
        Ok(ws)
    }

    /// Opens an existing workspace.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let ws = Workspace { root: root.into() };
        let config = ws.config()?;
        if config.version != SCHEMA_VERSION {
            return Err(Error::invalid(format!(
                "workspace schema {} is not {SCHEMA_VERSION}",
                config.version
            )));
        }
        Ok(ws)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn write(&self, rel: &str, body: &str) -> Result<()> {
        let path = self.path(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(&path, body).map_err(|e| Error::io(&path, e))
    }

    /// Reads an artifact; a missing file is reported as an incomplete stage.
    pub fn read(&self, rel: &str) -> Result<String> {
        let path = self.path(rel);
        match fs::read_to_string(&path) {
            Ok(s) => Ok(s),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(Error::Missing(rel.to_string())),
            Err(e) => Err(Error::io(&path, e)),
        }
    }

    fn read_json<T: DeserializeOwned>(&self, rel: &str) -> Result<T> {
        Ok(serde_json::from_str(&self.read(rel)?)?)
    }

    pub fn config(&self) -> Result<WorkspaceConfig> {
        self.read_json(CONFIG_FILE)
    }

    pub fn save_config(&self, config: &WorkspaceConfig) -> Result<()> {
        self.write(CONFIG_FILE, &to_json(config))
    }

    fn update_config(&self, f: impl FnOnce(&mut WorkspaceConfig)) -> Result<()> {
        let mut c = self.config()?;
        f(&mut c);
        self.save_config(&c)
    }

    // ingest

    pub fn ingest(&self, inputs: &InputPaths, merge_distance_m: f64) -> Result<IngestReport> {
        for (src, rel) in [
            (&inputs.occupancy, OCCUPANCY),
            (&inputs.blocks, BLOCKS),
            (&inputs.pois, POIS),
            (&inputs.time_spent, TIME_SPENT),
        ] {
            let body = fs::read(src).map_err(|e| Error::io(src, e))?;
            let dst = self.path(rel);
            fs::create_dir_all(dst.parent().expect("inputs dir")).map_err(|e| Error::io(&dst, e))?;
            fs::write(&dst, body).map_err(|e| Error::io(&dst, e))?;
        }

        let occupancy = parse_occupancy_csv(&self.path(OCCUPANCY), &OccupancyFormat::default())?;
        let (blocks, pois) = (self.blocks()?, self.pois()?);
        let time_spent = self.stats(Basis::TimeSpent)?;
        let area = match &inputs.area {
            Some(p) => load_amenity_stats(p, Basis::Area)?,
            None => area_stats_from_pois(&pois)?,
        };
        self.write(AREA, &area.to_csv()?)?;

        let index = match_amenities(&blocks, &pois, merge_distance_m)?;
        self.write(AMENITY_INDEX, &to_json(&index))?;
        let report = IngestReport {
            records: occupancy.records.len(),
            rejected: occupancy
                .rejected
                .iter()
                .map(|r| RejectedRow {
                    line: r.line,
                    message: r.message.clone(),
                })
                .collect(),
            blocks: blocks.len(),
            monitored_blocks: blocks.iter().filter(|b| b.has_parking_data).count(),
            pois: pois.len(),
            usable_pois: pois.iter().filter(|p| p.is_usable()).count(),
            merge_distance_m,
            unknown_amenities: index.unknown_amenities(&time_spent).into_iter().collect(),
        };
        self.write(INGEST_REPORT, &to_json(&report))?;
        self.update_config(|c| c.merge_distance_m = Some(merge_distance_m))?;
        Ok(report)
    }

    pub fn blocks(&self) -> Result<Vec<Block>> {
        parse_blocks(&self.read(BLOCKS)?)
    }

    pub fn pois(&self) -> Result<Vec<Poi>> {
        parse_pois(&self.read(POIS)?)
    }

    pub fn records(&self) -> Result<Vec<OccupancyRecord>> {
        if !self.path(OCCUPANCY).exists() {
            return Err(Error::Missing(OCCUPANCY.to_string()));
        }
        Ok(parse_occupancy_csv(&self.path(OCCUPANCY), &OccupancyFormat::default())?.records)
    }

    pub fn stats(&self, basis: Basis) -> Result<AmenityStatsTable> {
        let rel = match basis {
            Basis::TimeSpent => TIME_SPENT,
            Basis::Area => AREA,
        };
        if !self.path(rel).exists() {
            return Err(Error::Missing(rel.to_string()));
        }
        load_amenity_stats(&self.path(rel), basis)
    }

    pub fn amenity_index(&self) -> Result<BlockAmenityIndex> {
        self.read_json(AMENITY_INDEX)
    }

    pub fn ingest_report(&self) -> Result<IngestReport> {
        self.read_json(INGEST_REPORT)
    }

    // cluster + aggregate

    pub fn cluster(&self, k_with: usize, ratio: f64, seed: u64) -> Result<ClusterPartition> {
        let partition = partition_city(&self.blocks()?, k_with, ratio, seed)?;
        self.write(PARTITION, &to_json(&partition))?;
        self.update_config(|c| c.partition = Some(PartitionParams { k_with, ratio, seed }))?;
        Ok(partition)
    }

    pub fn partition(&self) -> Result<ClusterPartition> {
        self.read_json(PARTITION)
    }

    /// Writes per-timestamp averaged rows for each monitored cluster.
    pub fn aggregate(&self) -> Result<Vec<(usize, AggregationDiagnostics)>> {
        let partition = self.partition()?;
        let records = self.records()?;
        let dir = self.path(TRAINING_DIR);
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        let mut out = Vec::new();
        for c in &partition.clusters_with {
            let (points, diag) = aggregate_cluster(&records, &c.block_ids, OccupancyMode::RateMean);
            let mut buf = Vec::new();
            write_training_csv(&mut buf, &points)?;
            self.write(
                &format!("{TRAINING_DIR}/{}.csv", c.cluster_id),
                &String::from_utf8(buf).expect("csv output is utf-8"),
            )?;
            out.push((c.cluster_id, diag));
        }
        Ok(out)
    }

    pub fn training_points(&self, cluster_id: usize) -> Result<Vec<AggregatedPoint>> {
        read_training_csv(self.read(&format!("{TRAINING_DIR}/{cluster_id}.csv"))?.as_bytes())
    }

    /// Aggregated and raw rows of every monitored cluster.
    pub fn monitored_clusters(&self) -> Result<Vec<MonitoredCluster>> {
        let partition = self.partition()?;
        let records = self.records()?;
        partition
            .clusters_with
            .iter()
            .map(|c| {
                Ok(MonitoredCluster {
                    cluster_id: c.cluster_id,
                    aggregate: self.training_points(c.cluster_id)?,
                    all: unaggregated_points(&records, &c.block_ids),
                })
            })
            .collect()
    }

    // learn

    pub fn train(&self, learner: Learner, datapoints: Datapoints, seed: u64) -> Result<ModelIndex> {
        let clusters = self.monitored_clusters()?;
        let models = train_sources(&clusters, learner, datapoints, seed)?;
        let dir = self.path(MODELS_DIR);
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        let mut entries = Vec::new();
        for c in &clusters {
            let model = &models[&c.cluster_id];
            let file = format!("{MODELS_DIR}/{}.model", c.cluster_id);
            self.write(&file, &to_json(model))?;
            entries.push(ModelIndexEntry {
                cluster_id: c.cluster_id,
                file,
                learner,
                hyperparameters: model.hyperparameters,
                cv_rmse: model.cv_rmse,
                rows: c.points(datapoints).len(),
            });
        }
        let index = ModelIndex {
            learner,
            datapoints,
            seed,
            models: entries,
        };
        self.write(MODEL_INDEX, &to_json(&index))?;
        self.update_config(|c| {
            c.training = Some(TrainingParams {
                learner,
                datapoints,
                seed,
            })
        })?;
        Ok(index)
    }

    pub fn model_index(&self) -> Result<ModelIndex> {
        self.read_json(MODEL_INDEX)
    }

    pub fn models(&self) -> Result<BTreeMap<usize, TrainedModel>> {
        self.model_index()?
            .models
            .iter()
            .map(|e| Ok((e.cluster_id, self.read_json(&e.file)?)))
            .collect()
    }

    // represent + similarity

    /// Both bases; the area basis is skipped when no amenity has an area.
    pub fn represent(&self) -> Result<Representations> {
        let partition = self.partition()?;
        let index = self.amenity_index()?;
        let mut out = Representations::new();
        for basis in [Basis::TimeSpent, Basis::Area] {
            let stats = self.stats(basis)?;
            if stats.is_empty() {
                continue;
            }
            let support = support_spec(&stats)?;
            let clusters = partition
                .clusters_with
                .iter()
                .chain(&partition.clusters_without)
                .map(|c| represent_cluster(c, &index, &stats, &support))
                .collect();
            out.insert(basis, BasisRepresentations { support, clusters });
        }
        self.write(REPRESENTATIONS, &to_json(&out))?;
        Ok(out)
    }

    pub fn representations(&self) -> Result<Representations> {
        self.read_json(REPRESENTATIONS)
    }

    fn similarity_path(metric: Metric, basis: Basis, pairing: Pairing) -> String {
        match pairing {
            Pairing::Transfer => format!("{SIMILARITY_DIR}/{metric}-{basis}.csv"),
            Pairing::Monitored => format!("{SIMILARITY_DIR}/with_data/{metric}-{basis}.csv"),
        }
    }

    /// Writes both pairings for one metric and basis.
    pub fn similarity(&self, metric: Metric, basis: Basis) -> Result<SimilarityMatrix> {
        let reps = self.representations()?;
        let r = reps
            .get(&basis)
            .ok_or_else(|| Error::Missing(format!("{basis} representations")))?;
        let with = r.group(Group::WithData);
        let transfer = SimilarityMatrix::compute(metric, basis, &with, &r.group(Group::WithoutData))?;
        let monitored = SimilarityMatrix::compute(metric, basis, &with, &with)?;
        self.write(&Self::similarity_path(metric, basis, Pairing::Transfer), &transfer.to_csv())?;
        self.write(&Self::similarity_path(metric, basis, Pairing::Monitored), &monitored.to_csv())?;
        Ok(transfer)
    }

    pub fn similarity_all(&self) -> Result<Vec<SimilarityMatrix>> {
        let bases: Vec<Basis> = self.representations()?.keys().copied().collect();
        let mut out = Vec::new();
        for basis in bases {
            for metric in Metric::ALL {
                out.push(self.similarity(metric, basis)?);
            }
        }
        Ok(out)
    }

    pub fn similarity_csv(&self, metric: Metric, basis: Basis, pairing: Pairing) -> Result<String> {
        self.read(&Self::similarity_path(metric, basis, pairing))
    }

    pub fn load_similarity(&self, metric: Metric, basis: Basis, pairing: Pairing) -> Result<SimilarityMatrix> {
        SimilarityMatrix::from_csv(metric, basis, &self.similarity_csv(metric, basis, pairing)?)
    }

    // estimate

    pub fn lot_inputs(&self) -> Result<(f64, f64)> {
        let config = self.config()?;
        let points = match config.lot_inputs {
            LotInputs::Fixed { .. } => Vec::new(),
            LotInputs::MonitoredAverage => self
                .partition()?
                .clusters_with
                .iter()
                .map(|c| self.training_points(c.cluster_id))
                .collect::<Result<Vec<_>>>()?,
        };
        Ok(config.lot_inputs.resolve(points.iter().map(Vec::as_slice)))
    }

    /// One table per query time for an unmonitored cluster.
    pub fn estimate(&self, target: usize, times: &[NaiveDateTime], metric: Metric, basis: Basis) -> Result<Vec<EstimateTable>> {
        let partition = self.partition()?;
        if partition.cluster(Group::WithoutData, target).is_none() {
            return Err(Error::invalid(format!("no unmonitored cluster {target}")));
        }
        let models = self.models()?;
        let sims = self.load_similarity(metric, basis, Pairing::Transfer)?;
        let (price, spots) = self.lot_inputs()?;
        times
            .iter()
            .map(|&t| estimate_for_target(target, &models, &sims, t, &extract_features(t, price, spots)))
            .collect()
    }

    /// The configured date and hours.
    pub fn estimate_times(&self) -> Result<Vec<NaiveDateTime>> {
        let c = self.config()?;
        Ok(timestamps_for(c.estimate_date, &c.estimate_hours))
    }

    // evaluate

    pub fn evaluate(&self, config: &EvaluationConfig) -> Result<EvaluationReport> {
        let ws_config = self.config()?;
        let partition = self.partition()?;
        let clusters = self.monitored_clusters()?;
        let training = ws_config.training;
        let reps = self.representations()?;

        let mut learners = config.learners.clone();
        if !learners.contains(&config.primary) {
            learners.push(config.primary);
        }
        let models_for = |learner: Learner, train_on: Datapoints| -> Result<BTreeMap<usize, TrainedModel>> {
            match training {
                Some(t) if t.learner == learner && t.datapoints == train_on && t.seed == config.seed => self.models(),
                _ => train_sources(&clusters, learner, train_on, config.seed),
            }
        };

        let mut matrices = Vec::new();
        for &learner in &learners {
            let m = transfer_errors(&models_for(learner, config.train_on)?, &clusters, config.train_on, config.test_on)?;
            self.write(&format!("{EVALUATION_DIR}/transfer-{learner}.csv"), &m.to_csv())?;
            matrices.push(m);
        }
        let best_methods = best_method_fractions(&matrices)?;
        let mean_errors = matrices.iter().map(|m| (m.learner, m.mean())).collect();

        let mut combos = vec![(config.train_on, config.test_on)];
        if config.ablation {
            for train_on in [Datapoints::Aggregate, Datapoints::All] {
                for test_on in [Datapoints::Aggregate, Datapoints::All] {
                    if !combos.contains(&(train_on, test_on)) {
                        combos.push((train_on, test_on));
                    }
                }
            }
        }
        let mut runs = Vec::new();
        let mut primary_models: Vec<(Datapoints, BTreeMap<usize, TrainedModel>)> = Vec::new();
        for (train_on, test_on) in combos {
            let errors = if (train_on, test_on) == (config.train_on, config.test_on) {
                matrices
                    .iter()
                    .find(|m| m.learner == config.primary)
                    .expect("primary learner evaluated")
                    .clone()
            } else {
                let i = match primary_models.iter().position(|(d, _)| *d == train_on) {
                    Some(i) => i,
                    None => {
                        primary_models.push((train_on, models_for(config.primary, train_on)?));
                        primary_models.len() - 1
                    }
                };
                transfer_errors(&primary_models[i].1, &clusters, train_on, test_on)?
            };
            runs.push(DatapointRun {
                train_on,
                test_on,
                mean_rmse: errors.mean(),
                correlations: self.correlations(&errors, reps.keys().copied(), config.pooled)?,
            });
        }

        let extended = if config.extended {
            let time_spent = reps
                .get(&Basis::TimeSpent)
                .ok_or_else(|| Error::Missing("time_spent representations".into()))?;
            let by_id = time_spent
                .group(Group::WithData)
                .into_iter()
                .map(|r| (r.cluster_id, r))
                .collect();
            Some(extended_total_models(&clusters, &by_id, config.primary, config.seed)?)
        } else {
            None
        };

        let report = EvaluationReport {
            k_with: partition.k_with,
            merge_distance_m: ws_config.merge_distance_m,
            config: config.clone(),
            best_methods,
            mean_errors,
            runs,
            extended,
        };
        self.write_evaluation_tables(&report)?;
        Ok(report)
    }

    fn correlations(
        &self,
        errors: &TransferErrorMatrix,
        bases: impl Iterator<Item = Basis>,
        pooled: bool,
    ) -> Result<Vec<BasisCorrelation>> {
        bases
            .map(|basis| {
                let cos = self.load_similarity(Metric::Cosine, basis, Pairing::Monitored)?;
                let emd = self.load_similarity(Metric::Emd, basis, Pairing::Monitored)?;
                Ok(BasisCorrelation {
                    basis,
                    report: correlate_similarity_errors(errors, &[&cos, &emd], pooled)?,
                })
            })
            .collect()
    }

    fn write_evaluation_tables(&self, report: &EvaluationReport) -> Result<()> {
        let k = report.k_with;
        let merge = report.merge_distance_m.map_or_else(String::new, |d| d.to_string());
        let mut best = String::from("clusters");
        let mut row = k.to_string();
        for (learner, f) in &report.best_methods {
            best.push_str(&format!(",{learner}"));
            row.push_str(&format!(",{:.1}", f * 100.0));
        }
        self.write(&format!("{EVALUATION_DIR}/best_methods.csv"), &format!("{best}\n{row}\n"))?;

        let mut errors = String::from("clusters,datapoints_source,datapoints_target,test_error\n");
        let mut corr = String::from(
            "clusters,merge_distance,basis,datapoints_source,datapoints_target,cosine,rank_cosine,emd,rank_emd,excluded\n",
        );
        for run in &report.runs {
            errors.push_str(&format!("{k},{},{},{:.2}\n", run.train_on.as_str(), run.test_on.as_str(), run.mean_rmse));
            for bc in &run.correlations {
                let get = |m: Metric| bc.report.metric(m);
                let (c, e) = (get(Metric::Cosine), get(Metric::Emd));
                let excluded: usize = bc.report.metrics.iter().map(|m| m.excluded_pearson + m.excluded_spearman).sum();
                corr.push_str(&format!(
                    "{k},{},{},{},{},{},{},{},{},{excluded}\n",
                    merge,
                    bc.basis,
                    run.train_on.as_str(),
                    run.test_on.as_str(),
                    fmt_opt(c.and_then(|m| m.pearson)),
                    fmt_opt(c.and_then(|m| m.spearman)),
                    fmt_opt(e.and_then(|m| m.pearson)),
                    fmt_opt(e.and_then(|m| m.spearman)),
                ));
            }
        }
        self.write(&format!("{EVALUATION_DIR}/datapoints.csv"), &errors)?;
        self.write(&format!("{EVALUATION_DIR}/correlations.csv"), &corr)?;

        if let Some(ext) = &report.extended {
            let learner = ext.learner;
            self.write(
                &format!("{EVALUATION_DIR}/total_models.csv"),
                &format!(
                    "clusters,model,test_error_average\n{k},{learner},{:.2}\n{k},{learner} total,{:.2}\n",
                    ext.mean_base, ext.mean_extended
                ),
            )?;
        }
        self.write(&format!("{EVALUATION_DIR}/report.json"), &to_json(report))
    }

    pub fn evaluation_report(&self) -> Result<EvaluationReport> {
        self.read_json(&format!("{EVALUATION_DIR}/report.json"))
    }
}

/// Runs every stage in order.
pub fn run_pipeline(root: impl Into<PathBuf>, config: &PipelineConfig) -> Result<(Workspace, Option<EvaluationReport>)> {
    let ws = Workspace::create(root)?;
    ws.ingest(&config.inputs, config.merge_distance_m)?;
    ws.cluster(config.k_with, config.ratio, config.seed)?;
    ws.aggregate()?;
    ws.train(config.learner, config.datapoints, config.seed)?;
    ws.represent()?;
    ws.similarity_all()?;
    let report = match &config.evaluation {
        Some(e) => Some(ws.evaluate(e)?),
        None => None,
    };
    Ok((ws, report))
}

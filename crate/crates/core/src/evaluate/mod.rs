//! Transfer-error experiments over monitored clusters.

pub mod stats;
pub mod synth;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregate::{AggregatedPoint, Datapoints};
use crate::error::{Error, Result};
use crate::learn::{train, Dataset, Learner, TrainedModel};
use crate::represent::ClusterRepresentation;
use crate::similarity::{Metric, SimilarityMatrix};

pub use stats::{mean_defined, pearson, ranks, spearman};
pub use synth::{generate_synthetic_city, Archetype, SyntheticCity, SyntheticCityConfig};

/// Both training-row variants of one monitored cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct MonitoredCluster {
    pub cluster_id: usize,
    pub aggregate: Vec<AggregatedPoint>,
    pub all: Vec<AggregatedPoint>,
}

impl MonitoredCluster {
    pub fn points(&self, datapoints: Datapoints) -> &[AggregatedPoint] {
        match datapoints {
            Datapoints::Aggregate => &self.aggregate,
            Datapoints::All => &self.all,
        }
    }

    pub fn dataset(&self, datapoints: Datapoints) -> Result<Dataset> {
        let points = self.points(datapoints);
        if points.is_empty() {
            return Err(Error::Missing(format!("training rows for cluster {}", self.cluster_id)));
        }
        Ok(Dataset::from_points(points)?.with_source(self.cluster_id, datapoints))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferEntry {
    pub source: usize,
    pub target: usize,
    /// Percent scale.
    pub rmse: f64,
}

/// Errors of each source model on every other monitored cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferErrorMatrix {
    pub learner: Learner,
    pub train_on: Datapoints,
    pub test_on: Datapoints,
    pub clusters: Vec<usize>,
    /// Ordered by (source, target).
    pub entries: Vec<TransferEntry>,
    /// Each model on its own training rows.
    pub self_errors: Vec<TransferEntry>,
}

impl TransferErrorMatrix {
    pub fn get(&self, source: usize, target: usize) -> Option<f64> {
        self.entries
            .binary_search_by(|e| (e.source, e.target).cmp(&(source, target)))
            .ok()
            .map(|i| self.entries[i].rmse)
    }

    /// `(target, rmse)` for one source.
    pub fn row(&self, source: usize) -> Vec<(usize, f64)> {
        self.entries
            .iter()
            .filter(|e| e.source == source)
            .map(|e| (e.target, e.rmse))
            .collect()
    }

    pub fn mean(&self) -> f64 {
        self.entries.iter().map(|e| e.rmse).sum::<f64>() / self.entries.len() as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("source,target,rmse\n");
        for e in &self.entries {
            let _ = writeln!(out, "{},{},{:.6}", e.source, e.target, e.rmse);
        }
        out
    }
}

fn percent_rmse(model: &TrainedModel, data: &Dataset) -> Result<f64> {
    Ok(model.rmse_on(data)? * 100.0)
}

/// Applies already trained models to every other cluster's rows.
pub fn transfer_errors(
    models: &BTreeMap<usize, TrainedModel>,
    clusters: &[MonitoredCluster],
    train_on: Datapoints,
    test_on: Datapoints,
) -> Result<TransferErrorMatrix> {
    if clusters.len() < 2 {
        return Err(Error::invalid("transfer needs at least two monitored clusters"));
    }
    let mut sorted: Vec<&MonitoredCluster> = clusters.iter().collect();
    sorted.sort_by_key(|c| c.cluster_id);
    let tests: Vec<Dataset> = sorted.iter().map(|c| c.dataset(test_on)).collect::<Result<_>>()?;
    let learner = models
        .values()
        .next()
        .map(|m| m.learner)
        .ok_or(Error::EmptyInput("model set"))?;
    let mut entries = Vec::new();
    let mut self_errors = Vec::new();
    for s in &sorted {
        let model = models
            .get(&s.cluster_id)
            .ok_or_else(|| Error::Missing(format!("model for cluster {}", s.cluster_id)))?;
        if model.learner != learner {
            return Err(Error::invalid("models of mixed learners"));
        }
        for (t, test) in sorted.iter().zip(&tests) {
            let entry = TransferEntry {
                source: s.cluster_id,
                target: t.cluster_id,
                rmse: percent_rmse(model, test)?,
            };
            if s.cluster_id == t.cluster_id {
                self_errors.push(entry);
            } else {
                entries.push(entry);
            }
        }
    }
    Ok(TransferErrorMatrix {
        learner,
        train_on,
        test_on,
        clusters: sorted.iter().map(|c| c.cluster_id).collect(),
        entries,
        self_errors,
    })
}

pub fn train_sources(
    clusters: &[MonitoredCluster],
    learner: Learner,
    train_on: Datapoints,
    seed: u64,
) -> Result<BTreeMap<usize, TrainedModel>> {
    clusters
        .par_iter()
        .map(|c| {
            let model = train(learner, &c.dataset(train_on)?, seed)?;
            Ok((c.cluster_id, model))
        })
        .collect()
}

/// Trains one model per cluster and scores it on every other cluster.
pub fn pairwise_transfer(
    clusters: &[MonitoredCluster],
    learner: Learner,
    train_on: Datapoints,
    test_on: Datapoints,
    seed: u64,
) -> Result<TransferErrorMatrix> {
    if clusters.len() < 2 {
        return Err(Error::invalid("transfer needs at least two monitored clusters"));
    }
    let models = train_sources(clusters, learner, train_on, seed)?;
    transfer_errors(&models, clusters, train_on, test_on)
}

/// Share of pairs on which each learner has the lowest error. Ties split
/// the vote.
pub fn best_method_fractions(matrices: &[TransferErrorMatrix]) -> Result<Vec<(Learner, f64)>> {
    let first = matrices.first().ok_or(Error::EmptyInput("matrix list"))?;
    let pairs: Vec<(usize, usize)> = first.entries.iter().map(|e| (e.source, e.target)).collect();
    for m in &matrices[1..] {
        if m.entries.len() != pairs.len()
            || m.entries.iter().zip(&pairs).any(|(e, p)| (e.source, e.target) != *p)
        {
            return Err(Error::invalid("transfer matrices cover different cluster pairs"));
        }
    }
    if pairs.is_empty() {
        return Err(Error::EmptyInput("cluster pairs"));
    }
    let mut votes = vec![0.0; matrices.len()];
    for i in 0..pairs.len() {
        let best = matrices
            .iter()
            .map(|m| m.entries[i].rmse)
            .fold(f64::INFINITY, f64::min);
        let winners: Vec<usize> = (0..matrices.len())
            .filter(|&j| matrices[j].entries[i].rmse == best)
            .collect();
        for j in &winners {
            votes[*j] += 1.0 / winners.len() as f64;
        }
    }
    Ok(matrices
        .iter()
        .zip(votes)
        .map(|(m, v)| (m.learner, v / pairs.len() as f64))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceCorrelation {
    pub source: usize,
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricCorrelation {
    pub metric: Metric,
    /// Empty in pooled mode.
    pub per_source: Vec<SourceCorrelation>,
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
    /// Sources whose coefficient was undefined.
    pub excluded_pearson: usize,
    pub excluded_spearman: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub pooled: bool,
    pub train_on: Datapoints,
    pub test_on: Datapoints,
    pub metrics: Vec<MetricCorrelation>,
}

impl CorrelationReport {
    pub fn metric(&self, metric: Metric) -> Option<&MetricCorrelation> {
        self.metrics.iter().find(|m| m.metric == metric)
    }
}

/// Correlates each source's error row with its similarity row (or all pairs
/// at once when `pooled`). `sims` must be monitored-by-monitored matrices.
pub fn correlate_similarity_errors(
    errors: &TransferErrorMatrix,
    sims: &[&SimilarityMatrix],
    pooled: bool,
) -> Result<CorrelationReport> {
    let mut metrics = Vec::with_capacity(sims.len());
    for sim in sims {
        let lookup = |s: usize, t: usize| {
            sim.get(s, t)
                .ok_or_else(|| Error::Missing(format!("{} similarity for pair ({s}, {t})", sim.metric)))
        };
        if pooled {
            let mut x = Vec::with_capacity(errors.entries.len());
            for e in &errors.entries {
                x.push(lookup(e.source, e.target)?);
            }
            let y: Vec<f64> = errors.entries.iter().map(|e| e.rmse).collect();
            let (p, s) = (pearson(&x, &y), spearman(&x, &y));
            metrics.push(MetricCorrelation {
                metric: sim.metric,
                per_source: Vec::new(),
                pearson: p,
                spearman: s,
                excluded_pearson: usize::from(p.is_none()),
                excluded_spearman: usize::from(s.is_none()),
            });
            continue;
        }
        let mut per_source = Vec::with_capacity(errors.clusters.len());
        for &source in &errors.clusters {
            let row = errors.row(source);
            let mut x = Vec::with_capacity(row.len());
            for &(t, _) in &row {
                x.push(lookup(source, t)?);
            }
            let y: Vec<f64> = row.iter().map(|r| r.1).collect();
            per_source.push(SourceCorrelation {
                source,
                pearson: pearson(&x, &y),
                spearman: spearman(&x, &y),
            });
        }
        let (p, excluded_pearson) = mean_defined(&per_source.iter().map(|c| c.pearson).collect::<Vec<_>>());
        let (s, excluded_spearman) = mean_defined(&per_source.iter().map(|c| c.spearman).collect::<Vec<_>>());
        metrics.push(MetricCorrelation {
            metric: sim.metric,
            per_source,
            pearson: p,
            spearman: s,
            excluded_pearson,
            excluded_spearman,
        });
    }
    Ok(CorrelationReport {
        pooled,
        train_on: errors.train_on,
        test_on: errors.test_on,
        metrics,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeldOutResult {
    pub held_out: usize,
    pub base_rmse: f64,
    pub extended_rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtendedComparison {
    pub learner: Learner,
    pub folds: Vec<HeldOutResult>,
    pub mean_base: f64,
    pub mean_extended: f64,
}

/// Leave-one-cluster-out models on the union of the other clusters, with
/// base features and with cluster descriptors appended.
pub fn extended_total_models(
    clusters: &[MonitoredCluster],
    representations: &BTreeMap<usize, ClusterRepresentation>,
    learner: Learner,
    seed: u64,
) -> Result<ExtendedComparison> {
    if clusters.len() < 3 {
        return Err(Error::invalid("total models need at least three monitored clusters"));
    }
    let mut base = Vec::with_capacity(clusters.len());
    let mut extended = Vec::with_capacity(clusters.len());
    for c in clusters {
        let rep = representations
            .get(&c.cluster_id)
            .ok_or_else(|| Error::Missing(format!("representation of cluster {}", c.cluster_id)))?;
        base.push(c.dataset(Datapoints::Aggregate)?);
        extended.push(Dataset::from_points_with(&c.aggregate, &rep.extended_features())?);
    }
    let folds: Vec<HeldOutResult> = (0..clusters.len())
        .into_par_iter()
        .map(|h| {
            let score = |sets: &[Dataset]| -> Result<f64> {
                let train_set = Dataset::concat(sets.iter().enumerate().filter(|(i, _)| *i != h).map(|(_, d)| d))?;
                percent_rmse(&train(learner, &train_set, seed)?, &sets[h])
            };
            Ok(HeldOutResult {
                held_out: clusters[h].cluster_id,
                base_rmse: score(&base)?,
                extended_rmse: score(&extended)?,
            })
        })
        .collect::<Result<_>>()?;
    let n = folds.len() as f64;
    Ok(ExtendedComparison {
        learner,
        mean_base: folds.iter().map(|f| f.base_rmse).sum::<f64>() / n,
        mean_extended: folds.iter().map(|f| f.extended_rmse).sum::<f64>() / n,
        folds,
    })
}

//! Similarity-widened occupancy intervals for clusters without sensor data.

use std::collections::BTreeMap;

use chrono::{NaiveDate, NaiveDateTime, NaiveTime};
use serde::{Deserialize, Serialize};

use crate::aggregate::{extract_features, AggregatedPoint, FeatureVector};
use crate::error::{Error, Result};
use crate::learn::{predict, TrainedModel};
use crate::similarity::{Metric, SimilarityMatrix};

/// Default query grid: eight times three hours apart starting at midnight.
pub const DEFAULT_HOURS: [u32; 8] = [0, 3, 6, 9, 12, 15, 18, 21];
pub const DEFAULT_PRICE_RATE: f64 = 1.0;
pub const DEFAULT_TOTAL_SPOTS: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimationInterval {
    pub lo: f64,
    pub hi: f64,
    /// Raw model output.
    pub point: f64,
    pub source_cluster: usize,
    pub similarity: f64,
    pub metric: Metric,
}

impl EstimationInterval {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

fn widened(point: f64, widening: f64, source_cluster: usize, similarity: f64, metric: Metric) -> Result<EstimationInterval> {
    if !(0.0..=1.0).contains(&similarity) {
        return Err(Error::invalid(format!("{metric} value {similarity} outside [0, 1]")));
    }
    if !(0.0..=1.0).contains(&point) {
        return Err(Error::invalid(format!("point estimate {point} outside [0, 1]")));
    }
    Ok(EstimationInterval {
        lo: (point - widening).clamp(0.0, 1.0),
        hi: (point + widening).clamp(0.0, 1.0),
        point,
        source_cluster,
        similarity,
        metric,
    })
}

/// `[point - (1 - sim), point + (1 - sim)]`, clamped to [0, 1].
pub fn interval_cosine(point: f64, sim: f64) -> Result<EstimationInterval> {
    widened(point, 1.0 - sim, 0, sim, Metric::Cosine)
}

/// `[point - emd, point + emd]`, clamped to [0, 1].
pub fn interval_emd(point: f64, emd: f64) -> Result<EstimationInterval> {
    widened(point, emd, 0, emd, Metric::Emd)
}

pub fn interval_for(metric: Metric, point: f64, similarity: f64, source_cluster: usize) -> Result<EstimationInterval> {
    let widening = match metric {
        Metric::Cosine => 1.0 - similarity,
        Metric::Emd => similarity,
    };
    widened(point, widening, source_cluster, similarity, metric)
}

/// Closed interval `[lo, hi]`; empty intersections are `None`.
pub type Span = (f64, f64);

/// Running intersections of intervals given best-similarity-first. Once an
/// intersection is empty every later entry is empty.
pub fn intersection_intervals(rows: &[EstimationInterval]) -> Result<Vec<Option<Span>>> {
    for w in rows.windows(2) {
        let ordered = match w[0].metric {
            Metric::Cosine => w[0].similarity >= w[1].similarity,
            Metric::Emd => w[0].similarity <= w[1].similarity,
        };
        if !ordered || w[0].metric != w[1].metric {
            return Err(Error::Unordered);
        }
    }
    let mut out = Vec::with_capacity(rows.len());
    let mut running: Option<Span> = rows.first().map(|r| (r.lo, r.hi));
    for (k, r) in rows.iter().enumerate() {
        if k > 0 {
            running = running.and_then(|(lo, hi)| {
                let (lo, hi) = (lo.max(r.lo), hi.min(r.hi));
                (lo <= hi).then_some((lo, hi))
            });
        }
        out.push(running);
    }
    Ok(out)
}

/// Sorts best-similarity-first; ties by source id.
pub fn sort_best_first(rows: &mut [EstimationInterval]) {
    rows.sort_by(|a, b| {
        let by_sim = if a.metric.higher_is_better() {
            b.similarity.total_cmp(&a.similarity)
        } else {
            a.similarity.total_cmp(&b.similarity)
        };
        by_sim.then(a.source_cluster.cmp(&b.source_cluster))
    });
}

/// Where price and capacity inputs for unmonitored clusters come from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum LotInputs {
    /// Averages over all monitored clusters' training rows.
    MonitoredAverage,
    Fixed { price_rate: f64, total_spots: f64 },
}

impl Default for LotInputs {
    fn default() -> Self {
        LotInputs::MonitoredAverage
    }
}

impl LotInputs {
    pub fn table_defaults() -> Self {
        LotInputs::Fixed {
            price_rate: DEFAULT_PRICE_RATE,
            total_spots: DEFAULT_TOTAL_SPOTS,
        }
    }

    /// Resolves to concrete (price, spots) values.
    pub fn resolve<'a>(&self, monitored: impl IntoIterator<Item = &'a [AggregatedPoint]>) -> (f64, f64) {
        match *self {
            LotInputs::Fixed {
                price_rate,
                total_spots,
            } => (price_rate, total_spots),
            LotInputs::MonitoredAverage => {
                let (mut n, mut price, mut spots) = (0usize, 0.0, 0.0);
                for points in monitored {
                    for p in points {
                        n += 1;
                        price += p.price_rate;
                        spots += p.total_spots;
                    }
                }
                if n == 0 {
                    (DEFAULT_PRICE_RATE, DEFAULT_TOTAL_SPOTS)
                } else {
                    (price / n as f64, spots / n as f64)
                }
            }
        }
    }
}

pub fn timestamps_for(date: NaiveDate, hours: &[u32]) -> Vec<NaiveDateTime> {
    hours
        .iter()
        .map(|&h| date.and_time(NaiveTime::from_hms_opt(h, 0, 0).expect("hour in 0..24")))
        .collect()
}

pub fn build_unmonitored_input(date: NaiveDate, hours: &[u32], price_rate: f64, total_spots: f64) -> Result<Vec<FeatureVector>> {
    if hours.is_empty() {
        return Err(Error::EmptyInput("time list"));
    }
    if let Some(h) = hours.iter().find(|h| **h > 23) {
        return Err(Error::invalid(format!("hour {h} out of range")));
    }
    Ok(timestamps_for(date, hours)
        .into_iter()
        .map(|t| extract_features(t, price_rate, total_spots))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub interval: EstimationInterval,
    pub intersection: Option<Span>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateTable {
    pub target_cluster: usize,
    pub timestamp: NaiveDateTime,
    pub metric: Metric,
    pub rows: Vec<EstimateRow>,
}

/// Whole-percent rendering of a fraction.
pub fn percent(x: f64) -> i64 {
    (x * 100.0).round() as i64
}

impl EstimateTable {
    /// `source_id,similarity,lo%,hi%,eii_lo%,eii_hi%` with `empty` for an
    /// empty intersection.
    pub fn to_text(&self) -> String {
        let mut out = String::from("source_id,similarity,lo%,hi%,eii_lo%,eii_hi%\n");
        for r in &self.rows {
            let i = &r.interval;
            let eii = match r.intersection {
                Some((lo, hi)) => format!("{},{}", percent(lo), percent(hi)),
                None => "empty".to_string(),
            };
            out.push_str(&format!(
                "{},{:.4},{},{},{}\n",
                i.source_cluster,
                i.similarity,
                percent(i.lo),
                percent(i.hi),
                eii
            ));
        }
        out
    }
}

/// One row per monitored source model, sorted best-similarity-first, with
/// running intersections attached.
pub fn estimate_for_target(
    target: usize,
    models: &BTreeMap<usize, TrainedModel>,
    sims: &SimilarityMatrix,
    timestamp: NaiveDateTime,
    features: &FeatureVector,
) -> Result<EstimateTable> {
    if !sims.targets.contains(&target) {
        return Err(Error::Missing(format!("similarity column for target cluster {target}")));
    }
    let mut intervals = Vec::with_capacity(sims.sources.len());
    for &source in &sims.sources {
        let model = models
            .get(&source)
            .ok_or_else(|| Error::Missing(format!("model for cluster {source}")))?;
        let sim = sims.get(source, target).expect("source and target present");
        intervals.push(interval_for(sims.metric, predict(model, features), sim, source)?);
    }
    sort_best_first(&mut intervals);
    let eii = intersection_intervals(&intervals)?;
    Ok(EstimateTable {
        target_cluster: target,
        timestamp,
        metric: sims.metric,
        rows: intervals
            .into_iter()
            .zip(eii)
            .map(|(interval, intersection)| EstimateRow { interval, intersection })
            .collect(),
    })
}

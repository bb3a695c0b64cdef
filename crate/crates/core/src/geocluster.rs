//! Spatial partition of blocks into monitored and unmonitored clusters.
//!
//! Distances are squared Euclidean on raw (lat, lon) degree pairs, which is
//! adequate at city scale.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Block, LatLon};

pub const DEFAULT_RATIO: f64 = 2.6;
pub const DEFAULT_MAX_ITER: usize = 300;
pub const DEFAULT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    WithData,
    WithoutData,
}

impl Group {
    pub fn as_str(self) -> &'static str {
        match self {
            Group::WithData => "with_data",
            Group::WithoutData => "without_data",
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Group {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "with_data" => Ok(Group::WithData),
            "without_data" => Ok(Group::WithoutData),
            other => Err(Error::UnknownVariant {
                kind: "group",
                value: other.into(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub cluster_id: usize,
    pub group: Group,
    pub block_ids: BTreeSet<String>,
    pub centroid: LatLon,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterPartition {
    pub clusters_with: Vec<Cluster>,
    pub clusters_without: Vec<Cluster>,
    pub k_with: usize,
    pub k_without: usize,
    pub seed: u64,
    pub ratio: f64,
}

impl ClusterPartition {
    pub fn clusters(&self, group: Group) -> &[Cluster] {
        match group {
            Group::WithData => &self.clusters_with,
            Group::WithoutData => &self.clusters_without,
        }
    }

    pub fn cluster(&self, group: Group, id: usize) -> Option<&Cluster> {
        self.clusters(group).get(id)
    }

    /// Cluster membership lookup: block id → (group, cluster id).
    pub fn block_lookup(&self) -> std::collections::BTreeMap<&str, (Group, usize)> {
        self.clusters_with
            .iter()
            .chain(&self.clusters_without)
            .flat_map(|c| c.block_ids.iter().map(move |b| (b.as_str(), (c.group, c.cluster_id))))
            .collect()
    }

    /// Min, max and mean cluster size per group.
    pub fn size_dispersion(&self, group: Group) -> (usize, usize, f64) {
        let sizes: Vec<usize> = self.clusters(group).iter().map(|c| c.block_ids.len()).collect();
        let min = sizes.iter().copied().min().unwrap_or(0);
        let max = sizes.iter().copied().max().unwrap_or(0);
        let mean = sizes.iter().sum::<usize>() as f64 / sizes.len().max(1) as f64;
        (min, max, mean)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        KMeansConfig {
            k,
            seed,
            max_iter: DEFAULT_MAX_ITER,
            tol: DEFAULT_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub assignment: Vec<usize>,
    pub centroids: Vec<[f64; 2]>,
    pub iterations: usize,
    /// Within-cluster sum of squares after each assignment step.
    pub objective: Vec<f64>,
}

fn sq_dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

fn nearest(p: [f64; 2], centroids: &[[f64; 2]]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(p, *c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// K-Means++ seeding by D² sampling.
fn seed_centroids(points: &[[f64; 2]], k: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
    let mut centroids = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..points.len())]);
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(*p, centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = d2.iter().rposition(|&d| d > 0.0).expect("total > 0");
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..points.len())
        };
        let c = points[next];
        centroids.push(c);
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(*p, c));
        }
    }
    centroids
}

fn mean_of(points: &[[f64; 2]], assignment: &[usize], k: usize) -> (Vec<[f64; 2]>, Vec<usize>) {
    // sequential sums keep the result independent of thread count
    let mut sums = vec![[0.0; 2]; k];
    let mut counts = vec![0usize; k];
    for (p, &a) in points.iter().zip(assignment) {
        sums[a][0] += p[0];
        sums[a][1] += p[1];
        counts[a] += 1;
    }
    let means = sums
        .iter()
        .zip(&counts)
        .map(|(s, &n)| {
            if n == 0 {
                [f64::NAN; 2]
            } else {
                [s[0] / n as f64, s[1] / n as f64]
            }
        })
        .collect();
    (means, counts)
}

pub fn kmeans(points: &[[f64; 2]], config: KMeansConfig) -> Result<KMeansResult> {
    let KMeansConfig {
        k,
        seed,
        max_iter,
        tol,
    } = config;
    if points.is_empty() {
        return Err(Error::EmptyInput("point set"));
    }
    if k == 0 || max_iter == 0 || !(tol > 0.0) {
        return Err(Error::invalid("k and max_iter must be positive, tol > 0"));
    }
    let distinct: BTreeSet<(u64, u64)> = points
        .iter()
        .map(|p| (p[0].to_bits(), p[1].to_bits()))
        .collect();
    if k > distinct.len() {
        return Err(Error::invalid(format!(
            "k = {k} exceeds the {} distinct points",
            distinct.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = seed_centroids(points, k, &mut rng);
    let mut assignment = vec![0usize; points.len()];
    let mut objective = Vec::new();
    let mut iterations = 0;

    loop {
        iterations += 1;
        let assigned: Vec<(usize, f64)> = points.par_iter().map(|p| nearest(*p, &centroids)).collect();
        for (slot, (a, _)) in assignment.iter_mut().zip(&assigned) {
            *slot = *a;
        }
        objective.push(assigned.iter().map(|(_, d)| d).sum());

        let (mut next, mut counts) = mean_of(points, &assignment, k);
        // Reseed empty clusters at the point farthest from its centroid.
        while let Some(empty) = counts.iter().position(|&n| n == 0) {
            let far = (0..points.len())
                .filter(|&i| counts[assignment[i]] > 1)
                .max_by(|&i, &j| {
                    let di = sq_dist(points[i], next[assignment[i]]);
                    let dj = sq_dist(points[j], next[assignment[j]]);
                    di.total_cmp(&dj).then(j.cmp(&i))
                })
                .expect("k <= distinct points leaves a donor cluster");
            counts[assignment[far]] -= 1;
            assignment[far] = empty;
            counts[empty] = 1;
            next = mean_of(points, &assignment, k).0;
        }

        let shift = centroids
            .iter()
            .zip(&next)
            .map(|(a, b)| sq_dist(*a, *b).sqrt())
            .fold(0.0, f64::max);
        centroids = next;
        if shift < tol || iterations >= max_iter {
            break;
        }
    }

    Ok(KMeansResult {
        assignment,
        centroids,
        iterations,
        objective,
    })
}

/// Number of unmonitored clusters for `k_with` monitored ones.
pub fn k_without_for(k_with: usize, ratio: f64) -> usize {
    // the epsilon keeps exact products such as 2.5 * 4 from rounding down
    (ratio * k_with as f64 + 1e-9).floor() as usize
}

pub fn partition_city(blocks: &[Block], k_with: usize, ratio: f64, seed: u64) -> Result<ClusterPartition> {
    if k_with == 0 || !(ratio > 0.0) {
        return Err(Error::invalid("k_with must be >= 1 and ratio > 0"));
    }
    let k_without = k_without_for(k_with, ratio);
    if k_without == 0 {
        return Err(Error::invalid(format!(
            "ratio {ratio} x k_with {k_with} yields no unmonitored clusters"
        )));
    }
    let clusters_with = cluster_group(blocks, Group::WithData, k_with, seed)?;
    let clusters_without = cluster_group(blocks, Group::WithoutData, k_without, seed)?;
    Ok(ClusterPartition {
        clusters_with,
        clusters_without,
        k_with,
        k_without,
        seed,
        ratio,
    })
}

fn cluster_group(blocks: &[Block], group: Group, k: usize, seed: u64) -> Result<Vec<Cluster>> {
    let members: Vec<&Block> = blocks
        .iter()
        .filter(|b| b.has_parking_data == (group == Group::WithData))
        .collect();
    if members.is_empty() {
        return Err(Error::invalid(format!("no blocks in group {group}")));
    }
    let points: Vec<[f64; 2]> = members.iter().map(|b| [b.centroid.lat, b.centroid.lon]).collect();
    let result = kmeans(&points, KMeansConfig::new(k, seed))?;
    let (means, _) = mean_of(&points, &result.assignment, k);
    Ok((0..k)
        .map(|id| Cluster {
            cluster_id: id,
            group,
            block_ids: members
                .iter()
                .zip(&result.assignment)
                .filter(|(_, &a)| a == id)
                .map(|(b, _)| b.block_id.clone())
                .collect(),
            centroid: LatLon {
                lat: means[id][0],
                lon: means[id][1],
            },
        })
        .collect())
}

//! Per-cluster amenity representations: category-count vectors and summed
//! Gaussian curves over a binned duration (or area) axis.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geocluster::{Cluster, Group};
use crate::ingest::{AmenityStats, AmenityStatsTable, Basis, BlockAmenityIndex};

/// Upper-inclusive category thresholds on the amenity mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryScheme {
    pub basis: Basis,
    pub thresholds: Vec<f64>,
}

impl CategoryScheme {
    /// Minutes: up to 30, 31 to 90, above 90. Reduced area: up to 35,
    /// 36 to 100, above 100.
    pub fn for_basis(basis: Basis) -> Self {
        let thresholds = match basis {
            Basis::TimeSpent => vec![30.0, 90.0],
            Basis::Area => vec![35.0, 100.0],
        };
        CategoryScheme { basis, thresholds }
    }

    pub fn n_categories(&self) -> usize {
        self.thresholds.len() + 1
    }

    /// 1-based category of a mean value.
    pub fn categorize(&self, mean: f64) -> u8 {
        let i = self
            .thresholds
            .iter()
            .position(|&t| mean <= t)
            .unwrap_or(self.thresholds.len());
        (i + 1) as u8
    }
}

pub fn categorize_amenity(stats: &AmenityStats, scheme: &CategoryScheme) -> u8 {
    scheme.categorize(stats.mean)
}

/// How a POI reachable from several blocks of one cluster is counted.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Multiplicity {
    /// Once per cluster.
    #[default]
    PerCluster,
    /// Once per (block, POI) attachment.
    PerBlock,
}

/// Amenity counts of one cluster.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClusterAmenities {
    pub counts: BTreeMap<String, u32>,
    /// Occurrences whose amenity is missing from the statistics table.
    pub unknown: u32,
}

impl ClusterAmenities {
    pub fn total(&self) -> u32 {
        self.counts.values().sum()
    }
}

pub fn cluster_amenities(
    cluster: &Cluster,
    index: &BlockAmenityIndex,
    stats: &AmenityStatsTable,
    multiplicity: Multiplicity,
) -> ClusterAmenities {
    let occurrences = cluster.block_ids.iter().flat_map(|b| index.occurrences(b));
    let names: Vec<&str> = match multiplicity {
        Multiplicity::PerBlock => occurrences.map(|o| o.amenity.as_str()).collect(),
        Multiplicity::PerCluster => occurrences
            .map(|o| (o.poi_id.as_str(), o.amenity.as_str()))
            .collect::<BTreeMap<_, _>>()
            .into_values()
            .collect(),
    };
    let mut out = ClusterAmenities::default();
    for name in names {
        if stats.get(name).is_some() {
            *out.counts.entry(name.to_string()).or_insert(0) += 1;
        } else {
            out.unknown += 1;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterVector {
    pub counts: Vec<u32>,
}

impl ClusterVector {
    pub fn total(&self) -> u32 {
        self.counts.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.counts.iter().all(|&c| c == 0)
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| f64::from(c)).collect()
    }
}

pub fn vector_from_amenities(
    amenities: &ClusterAmenities,
    stats: &AmenityStatsTable,
    scheme: &CategoryScheme,
) -> ClusterVector {
    let mut counts = vec![0; scheme.n_categories()];
    for (name, &n) in &amenities.counts {
        if let Some(s) = stats.get(name) {
            counts[usize::from(scheme.categorize(s.mean)) - 1] += n;
        }
    }
    ClusterVector { counts }
}

pub fn build_cluster_vector(
    cluster: &Cluster,
    index: &BlockAmenityIndex,
    stats: &AmenityStatsTable,
    scheme: &CategoryScheme,
) -> ClusterVector {
    let amenities = cluster_amenities(cluster, index, stats, Multiplicity::PerCluster);
    vector_from_amenities(&amenities, stats, scheme)
}

/// Shared binned axis for all cluster curves of a run.
///
/// Bin `i` spans `(-offset + i*w, -offset + (i+1)*w]` and sits at its upper
/// edge, so the axis runs from `-offset` to `max_mean + offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportSpec {
    pub offset: f64,
    pub max_mean: f64,
    pub bins: usize,
    pub bin_width: f64,
}

impl SupportSpec {
    pub fn lower(&self) -> f64 {
        -self.offset
    }

    pub fn upper(&self) -> f64 {
        self.lower() + self.bins as f64 * self.bin_width
    }

    pub fn length(&self) -> f64 {
        self.bins as f64 * self.bin_width
    }

    pub fn position(&self, i: usize) -> f64 {
        self.lower() + (i + 1) as f64 * self.bin_width
    }

    /// Nearest bin to `x`, clamped to the axis.
    pub fn nearest_bin(&self, x: f64) -> usize {
        let i = ((x - self.lower()) / self.bin_width - 1.0).round();
        i.clamp(0.0, (self.bins - 1) as f64) as usize
    }
}

/// Offset of three times the largest stdev on both sides of the largest mean.
pub fn support_spec(stats: &AmenityStatsTable) -> Result<SupportSpec> {
    if stats.is_empty() {
        return Err(Error::EmptyInput("amenity statistics"));
    }
    let max_mean = stats.iter().map(|s| s.mean).fold(0.0, f64::max);
    let max_stdev = stats.iter().map(|s| s.stdev).fold(0.0, f64::max);
    let offset = 3.0 * max_stdev;
    let bins = ((max_mean + 2.0 * offset).ceil() as usize).max(1);
    Ok(SupportSpec {
        offset,
        max_mean,
        bins,
        bin_width: 1.0,
    })
}

/// Unit-mass discretized N(mean, stdev²) on the support. A zero stdev, or
/// one too narrow to register on the grid, yields a point mass.
pub fn amenity_curve(mean: f64, stdev: f64, support: &SupportSpec) -> Vec<f64> {
    let mut heights = vec![0.0; support.bins];
    if stdev > 0.0 {
        for (i, h) in heights.iter_mut().enumerate() {
            let z = (support.position(i) - mean) / stdev;
            *h = (-0.5 * z * z).exp();
        }
        let mass: f64 = heights.iter().sum::<f64>() * support.bin_width;
        if mass > 0.0 && mass.is_finite() {
            heights.iter_mut().for_each(|h| *h /= mass);
            return heights;
        }
        heights.iter_mut().for_each(|h| *h = 0.0);
    }
    heights[support.nearest_bin(mean)] = 1.0 / support.bin_width;
    heights
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterGaussian {
    pub support: SupportSpec,
    pub heights: Vec<f64>,
    pub normalized: bool,
}

impl ClusterGaussian {
    pub fn zeros(support: SupportSpec) -> Self {
        ClusterGaussian {
            support,
            heights: vec![0.0; support.bins],
            normalized: false,
        }
    }

    pub fn mass(&self) -> f64 {
        self.heights.iter().sum::<f64>() * self.support.bin_width
    }

    /// Adds `count` occurrences of an amenity curve.
    pub fn add(&mut self, curve: &[f64], count: u32) {
        let c = f64::from(count);
        for (h, v) in self.heights.iter_mut().zip(curve) {
            *h += c * v;
        }
    }

    pub fn sum(&self, other: &ClusterGaussian) -> Result<ClusterGaussian> {
        if self.support != other.support {
            return Err(Error::SupportMismatch);
        }
        Ok(ClusterGaussian {
            support: self.support,
            heights: self.heights.iter().zip(&other.heights).map(|(a, b)| a + b).collect(),
            normalized: false,
        })
    }
}

pub fn gaussian_from_amenities(
    amenities: &ClusterAmenities,
    stats: &AmenityStatsTable,
    support: &SupportSpec,
) -> ClusterGaussian {
    let mut g = ClusterGaussian::zeros(*support);
    for (name, &count) in &amenities.counts {
        let Some(s) = stats.get(name) else { continue };
        assert!(
            s.mean >= support.lower() && s.mean <= support.upper(),
            "amenity mean {} outside support",
            s.mean
        );
        g.add(&amenity_curve(s.mean, s.stdev, support), count);
    }
    g
}

pub fn build_cluster_gaussian(
    cluster: &Cluster,
    index: &BlockAmenityIndex,
    stats: &AmenityStatsTable,
    support: &SupportSpec,
) -> ClusterGaussian {
    let amenities = cluster_amenities(cluster, index, stats, Multiplicity::PerCluster);
    gaussian_from_amenities(&amenities, stats, support)
}

pub fn normalize(g: &ClusterGaussian) -> Result<ClusterGaussian> {
    let mass = g.mass();
    if !(mass > 0.0) {
        return Err(Error::ZeroMass);
    }
    Ok(ClusterGaussian {
        support: g.support,
        heights: g.heights.iter().map(|h| h / mass).collect(),
        normalized: true,
    })
}

/// First moment of an unnormalized curve: total accumulated duration (or
/// area) of the cluster's amenities.
pub fn gaussian_magnitude_feature(g: &ClusterGaussian) -> f64 {
    g.heights
        .iter()
        .enumerate()
        .map(|(i, h)| g.support.position(i) * h * g.support.bin_width)
        .sum()
}

/// Both representations of one cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRepresentation {
    pub cluster_id: usize,
    pub group: Group,
    pub amenities: ClusterAmenities,
    pub vector: ClusterVector,
    pub gaussian: ClusterGaussian,
}

impl ClusterRepresentation {
    /// Category counts followed by the curve's first moment.
    pub fn extended_features(&self) -> Vec<f64> {
        let mut f = self.vector.as_f64();
        f.push(gaussian_magnitude_feature(&self.gaussian));
        f
    }
}

pub fn represent_cluster(
    cluster: &Cluster,
    index: &BlockAmenityIndex,
    stats: &AmenityStatsTable,
    support: &SupportSpec,
) -> ClusterRepresentation {
    let amenities = cluster_amenities(cluster, index, stats, Multiplicity::PerCluster);
    let scheme = CategoryScheme::for_basis(stats.basis);
    ClusterRepresentation {
        cluster_id: cluster.cluster_id,
        group: cluster.group,
        vector: vector_from_amenities(&amenities, stats, &scheme),
        gaussian: gaussian_from_amenities(&amenities, stats, support),
        amenities,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{read_amenity_stats, AmenityOccurrence, LatLon, MatchDiagnostics};
    use proptest::prelude::*;

    fn table(rows: &[(&str, f64, f64)], basis: Basis) -> AmenityStatsTable {
        let scheme = CategoryScheme::for_basis(basis);
        let mut t = AmenityStatsTable::new(basis);
        for &(a, m, s) in rows {
            t.insert(AmenityStats {
                amenity: a.into(),
                mean: m,
                stdev: s,
                category: scheme.categorize(m),
            })
            .unwrap();
        }
        t
    }

    fn cluster(blocks: &[&str]) -> Cluster {
        Cluster {
            cluster_id: 0,
            group: Group::WithData,
            block_ids: blocks.iter().map(|b| b.to_string()).collect(),
            centroid: LatLon { lat: 0.0, lon: 0.0 },
        }
    }

    fn index(entries: &[(&str, &str, &str)]) -> BlockAmenityIndex {
        let mut blocks: BTreeMap<String, Vec<AmenityOccurrence>> = BTreeMap::new();
        for &(b, poi, amenity) in entries {
            blocks.entry(b.into()).or_default().push(AmenityOccurrence {
                poi_id: poi.into(),
                amenity: amenity.into(),
            });
        }
        BlockAmenityIndex {
            merge_distance_m: 100.0,
            blocks,
            diagnostics: MatchDiagnostics::default(),
        }
    }

    #[test]
    fn categories_from_duration_table() {
        let s = CategoryScheme::for_basis(Basis::TimeSpent);
        let stats = read_amenity_stats(
            "amenity,mean,stdev,category\npharmacy,25,20,1\ncafe,76,39,2\nnightclub,189,20,3\n".as_bytes(),
            Basis::TimeSpent,
        )
        .unwrap();
        assert_eq!(categorize_amenity(stats.get("pharmacy").unwrap(), &s), 1);
        assert_eq!(categorize_amenity(stats.get("cafe").unwrap(), &s), 2);
        assert_eq!(categorize_amenity(stats.get("nightclub").unwrap(), &s), 3);
        assert_eq!(s.categorize(30.0), 1);
        assert_eq!(s.categorize(31.0), 2);
        assert_eq!(s.categorize(90.0), 2);
        assert_eq!(s.categorize(90.5), 3);
    }

    #[test]
    fn vector_counts_categories() {
        let stats = table(&[("cafe", 76.0, 39.0), ("pharmacy", 25.0, 20.0), ("bar", 121.0, 38.0)], Basis::TimeSpent);
        let idx = index(&[
            ("a", "c1", "cafe"),
            ("a", "c2", "cafe"),
            ("b", "p1", "pharmacy"),
            ("b", "r1", "bar"),
            ("b", "r2", "bar"),
            ("b", "r3", "bar"),
            ("b", "x", "unlisted"),
        ]);
        let scheme = CategoryScheme::for_basis(Basis::TimeSpent);
        let c = cluster(&["a", "b"]);
        assert_eq!(build_cluster_vector(&c, &idx, &stats, &scheme).counts, vec![1, 2, 3]);
        assert_eq!(cluster_amenities(&c, &idx, &stats, Multiplicity::PerCluster).unknown, 1);
        assert_eq!(build_cluster_vector(&cluster(&["z"]), &idx, &stats, &scheme).counts, vec![0, 0, 0]);
    }

    #[test]
    fn shared_poi_counts_once_per_cluster() {
        let stats = table(&[("cafe", 76.0, 39.0)], Basis::TimeSpent);
        let idx = index(&[("a", "p", "cafe"), ("b", "p", "cafe")]);
        let c = cluster(&["a", "b"]);
        let scheme = CategoryScheme::for_basis(Basis::TimeSpent);
        assert_eq!(build_cluster_vector(&c, &idx, &stats, &scheme).counts, vec![0, 1, 0]);
        let per_block = cluster_amenities(&c, &idx, &stats, Multiplicity::PerBlock);
        assert_eq!(per_block.total(), 2);
    }

    fn duration_table() -> AmenityStatsTable {
        table(
            &[
                ("nightclub", 189.0, 20.0),
                ("bank", 42.0, 65.0),
                ("pharmacy", 25.0, 20.0),
                ("shelter", 90.0, 0.0),
            ],
            Basis::TimeSpent,
        )
    }

    #[test]
    fn support_from_duration_table() {
        let s = support_spec(&duration_table()).unwrap();
        assert_eq!((s.offset, s.bins), (195.0, 579));
        assert_eq!((s.lower(), s.upper()), (-195.0, 384.0));
        assert!(support_spec(&AmenityStatsTable::new(Basis::Area)).is_err());
    }

    #[test]
    fn point_mass_for_zero_stdev() {
        let stats = table(&[("x", 10.0, 0.0)], Basis::TimeSpent);
        let s = support_spec(&stats).unwrap();
        assert_eq!((s.lower(), s.upper(), s.bins), (0.0, 10.0, 10));
        let idx = index(&[("a", "p", "x")]);
        let g = build_cluster_gaussian(&cluster(&["a"]), &idx, &stats, &s);
        let nonzero: Vec<_> = g.heights.iter().enumerate().filter(|(_, h)| **h != 0.0).collect();
        assert_eq!(nonzero, vec![(9, &1.0)]);
        assert_eq!(s.position(9), 10.0);
    }

    #[test]
    fn two_occurrences_double_the_curve() {
        let stats = duration_table();
        let s = support_spec(&stats).unwrap();
        let one = build_cluster_gaussian(&cluster(&["a"]), &index(&[("a", "p", "bank")]), &stats, &s);
        let two = build_cluster_gaussian(
            &cluster(&["a"]),
            &index(&[("a", "p", "bank"), ("a", "q", "bank")]),
            &stats,
            &s,
        );
        for (a, b) in one.heights.iter().zip(&two.heights) {
            assert_eq!(*b, 2.0 * a);
        }
    }

    #[test]
    fn mass_equals_occurrence_count() {
        let stats = duration_table();
        let s = support_spec(&stats).unwrap();
        let idx = index(&[
            ("a", "1", "bank"),
            ("a", "2", "nightclub"),
            ("a", "3", "pharmacy"),
            ("a", "4", "shelter"),
            ("a", "5", "bank"),
        ]);
        let g = build_cluster_gaussian(&cluster(&["a"]), &idx, &stats, &s);
        // trapezoid-free check: width-1 bins, so the Riemann sum is the mass
        let riemann: f64 = g.heights.iter().map(|h| h * s.bin_width).sum();
        assert!((riemann - 5.0).abs() < 1e-6);
        assert!(g.heights.iter().all(|h| *h >= 0.0));
    }

    #[test]
    fn normalization() {
        let stats = duration_table();
        let s = support_spec(&stats).unwrap();
        let g = build_cluster_gaussian(
            &cluster(&["a"]),
            &index(&[("a", "1", "bank"), ("a", "2", "pub")]),
            &table(&[("bank", 42.0, 65.0), ("pub", 135.0, 21.0)], Basis::TimeSpent),
            &s,
        );
        assert!((g.mass() - 2.0).abs() < 1e-9);
        let n = normalize(&g).unwrap();
        assert!((n.mass() - 1.0).abs() < 1e-9);
        for (a, b) in g.heights.iter().zip(&n.heights) {
            if *a > 1e-300 {
                assert!((b / a - 0.5).abs() < 1e-9);
            }
        }
        let again = normalize(&n).unwrap();
        for (a, b) in n.heights.iter().zip(&again.heights) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(matches!(normalize(&ClusterGaussian::zeros(s)), Err(Error::ZeroMass)));
    }

    #[test]
    fn magnitude_feature() {
        let stats = table(&[("x", 10.0, 0.0), ("y", 30.0, 0.0)], Basis::TimeSpent);
        let s = support_spec(&stats).unwrap();
        let two_x = build_cluster_gaussian(&cluster(&["a"]), &index(&[("a", "1", "x"), ("a", "2", "x")]), &stats, &s);
        assert_eq!(gaussian_magnitude_feature(&two_x), 20.0);
        let xy = build_cluster_gaussian(&cluster(&["a"]), &index(&[("a", "1", "x"), ("a", "2", "y")]), &stats, &s);
        assert_eq!(gaussian_magnitude_feature(&xy), 40.0);
        assert_eq!(gaussian_magnitude_feature(&ClusterGaussian::zeros(s)), 0.0);
    }

    proptest! {
        #[test]
        fn curves_are_linear_in_occurrences(
            a in proptest::collection::vec(0usize..4, 0..12),
            b in proptest::collection::vec(0usize..4, 0..12),
        ) {
            let names = ["nightclub", "bank", "pharmacy", "shelter"];
            let stats = duration_table();
            let s = support_spec(&stats).unwrap();
            let mk = |v: &[usize], tag: &str| -> Vec<(String, String, String)> {
                v.iter().enumerate().map(|(i, &k)| ("blk".to_string(), format!("{tag}{i}"), names[k].to_string())).collect()
            };
            let to_idx = |e: &[(String, String, String)]| {
                let refs: Vec<(&str, &str, &str)> = e.iter().map(|(a, b, c)| (a.as_str(), b.as_str(), c.as_str())).collect();
                index(&refs)
            };
            let (ea, eb) = (mk(&a, "a"), mk(&b, "b"));
            let both: Vec<_> = ea.iter().chain(&eb).cloned().collect();
            let c = cluster(&["blk"]);
            let ga = build_cluster_gaussian(&c, &to_idx(&ea), &stats, &s);
            let gb = build_cluster_gaussian(&c, &to_idx(&eb), &stats, &s);
            let gab = build_cluster_gaussian(&c, &to_idx(&both), &stats, &s);
            let sum = ga.sum(&gb).unwrap();
            for (x, y) in sum.heights.iter().zip(&gab.heights) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            let v = build_cluster_vector(&c, &to_idx(&both), &stats, &CategoryScheme::for_basis(Basis::TimeSpent));
            prop_assert_eq!(v.total() as usize, a.len() + b.len());
        }
    }
}

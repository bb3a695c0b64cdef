//! Cosine similarity of cluster vectors and earth mover's distance between
//! cluster curves.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Basis;
use crate::represent::{normalize, ClusterGaussian, ClusterRepresentation, ClusterVector};

const MASS_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Cosine,
    Emd,
}

impl Metric {
    pub const ALL: [Metric; 2] = [Metric::Cosine, Metric::Emd];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Cosine => "cosine",
            Metric::Emd => "emd",
        }
    }

    /// Whether larger values mean more similar.
    pub fn higher_is_better(self) -> bool {
        matches!(self, Metric::Cosine)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(Metric::Cosine),
            "emd" => Ok(Metric::Emd),
            other => Err(Error::UnknownVariant {
                kind: "metric",
                value: other.into(),
            }),
        }
    }
}

/// Cosine of the angle between two count vectors. Zero vectors have
/// similarity 0 with everything.
pub fn cosine_similarity(a: &ClusterVector, b: &ClusterVector) -> Result<f64> {
    if a.counts.len() != b.counts.len() {
        return Err(Error::DimensionMismatch {
            left: a.counts.len(),
            right: b.counts.len(),
        });
    }
    let (a, b) = (a.as_f64(), b.as_f64());
    let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (na * nb)).clamp(0.0, 1.0))
}

fn check_pair(p: &ClusterGaussian, q: &ClusterGaussian) -> Result<()> {
    if p.support != q.support || p.heights.len() != q.heights.len() {
        return Err(Error::SupportMismatch);
    }
    for g in [p, q] {
        let m = g.mass();
        if (m - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::NotNormalized(m));
        }
    }
    Ok(())
}

/// 1-D Wasserstein distance between two unit-mass binned distributions on
/// the same support, as the integrated absolute CDF difference.
pub fn discrete_emd(p: &ClusterGaussian, q: &ClusterGaussian) -> Result<f64> {
    check_pair(p, q)?;
    let w = p.support.bin_width;
    let (mut cp, mut cq, mut total) = (0.0, 0.0, 0.0);
    for (a, b) in p.heights.iter().zip(&q.heights) {
        cp += a * w;
        cq += b * w;
        total += (cp - cq).abs() * w;
    }
    Ok(total)
}

/// [`discrete_emd`] divided by the support length, the largest possible
/// transport cost on that support.
pub fn emd_normalized(p: &ClusterGaussian, q: &ClusterGaussian) -> Result<f64> {
    Ok((discrete_emd(p, q)? / p.support.length()).clamp(0.0, 1.0))
}

/// Closed-form 2-Wasserstein distance between 1-D normals.
pub fn gaussian_w2(m1: f64, s1: f64, m2: f64, s2: f64) -> f64 {
    ((m1 - m2).powi(2) + (s1 - s2).powi(2)).sqrt()
}

/// Similarity between two cluster representations. Amenity-free clusters
/// score 0 (cosine) or the maximal distance 1 (emd).
pub fn pair_similarity(metric: Metric, a: &ClusterRepresentation, b: &ClusterRepresentation) -> Result<f64> {
    match metric {
        Metric::Cosine => cosine_similarity(&a.vector, &b.vector),
        Metric::Emd => {
            if a.gaussian.mass() <= 0.0 || b.gaussian.mass() <= 0.0 {
                return Ok(1.0);
            }
            emd_normalized(&normalize(&a.gaussian)?, &normalize(&b.gaussian)?)
        }
    }
}

/// Similarities from each source cluster (rows) to each target (columns).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub metric: Metric,
    pub basis: Basis,
    pub sources: Vec<usize>,
    pub targets: Vec<usize>,
    pub values: Vec<Vec<f64>>,
    /// Pairs involving an amenity-free cluster.
    #[serde(default)]
    pub degenerate_pairs: usize,
}

impl SimilarityMatrix {
    pub fn compute(
        metric: Metric,
        basis: Basis,
        sources: &[ClusterRepresentation],
        targets: &[ClusterRepresentation],
    ) -> Result<Self> {
        // normalize once per cluster
        let norm = |reps: &[ClusterRepresentation]| -> Result<Vec<Option<ClusterGaussian>>> {
            reps.iter()
                .map(|r| {
                    if metric == Metric::Emd && r.gaussian.mass() > 0.0 {
                        normalize(&r.gaussian).map(Some)
                    } else {
                        Ok(None)
                    }
                })
                .collect()
        };
        let (ns, nt) = (norm(sources)?, norm(targets)?);
        let mut degenerate = 0;
        let mut values = Vec::with_capacity(sources.len());
        for (s, gs) in sources.iter().zip(&ns) {
            let mut row = Vec::with_capacity(targets.len());
            for (t, gt) in targets.iter().zip(&nt) {
                let v = match metric {
                    Metric::Cosine => {
                        if s.vector.is_zero() || t.vector.is_zero() {
                            degenerate += 1;
                        }
                        cosine_similarity(&s.vector, &t.vector)?
                    }
                    Metric::Emd => match (gs, gt) {
                        (Some(p), Some(q)) => emd_normalized(p, q)?,
                        _ => {
                            degenerate += 1;
                            1.0
                        }
                    },
                };
                row.push(v);
            }
            values.push(row);
        }
        Ok(SimilarityMatrix {
            metric,
            basis,
            sources: sources.iter().map(|r| r.cluster_id).collect(),
            targets: targets.iter().map(|r| r.cluster_id).collect(),
            values,
            degenerate_pairs: degenerate,
        })
    }

    pub fn get(&self, source: usize, target: usize) -> Option<f64> {
        let i = self.sources.iter().position(|&s| s == source)?;
        let j = self.targets.iter().position(|&t| t == target)?;
        Some(self.values[i][j])
    }

    /// Fixed six-decimal CSV: `source,<target ids...>` then one row per source.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("source");
        for t in &self.targets {
            out.push_str(&format!(",{t}"));
        }
        out.push('\n');
        for (s, row) in self.sources.iter().zip(&self.values) {
            out.push_str(&s.to_string());
            for v in row {
                out.push_str(&format!(",{v:.6}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(metric: Metric, basis: Basis, text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or(Error::EmptyInput("similarity csv"))?;
        let mut cols = header.split(',');
        if cols.next() != Some("source") {
            return Err(Error::MalformedHeader {
                expected: "source,<targets>".into(),
                found: header.into(),
            });
        }
        let parse_id = |s: &str| s.trim().parse::<usize>().map_err(|_| Error::invalid(format!("bad cluster id `{s}`")));
        let targets = cols.map(parse_id).collect::<Result<Vec<_>>>()?;
        let mut sources = Vec::new();
        let mut values = Vec::new();
        for line in lines {
            let mut cells = line.split(',');
            sources.push(parse_id(cells.next().unwrap_or_default())?);
            let row = cells
                .map(|c| c.trim().parse::<f64>().map_err(|_| Error::invalid(format!("bad value `{c}`"))))
                .collect::<Result<Vec<_>>>()?;
            if row.len() != targets.len() {
                return Err(Error::DimensionMismatch {
                    left: row.len(),
                    right: targets.len(),
                });
            }
            values.push(row);
        }
        Ok(SimilarityMatrix {
            metric,
            basis,
            sources,
            targets,
            values,
            degenerate_pairs: 0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::represent::SupportSpec;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(c: &[u32]) -> ClusterVector {
        ClusterVector { counts: c.to_vec() }
    }

    fn support(bins: usize) -> SupportSpec {
        SupportSpec {
            offset: 0.0,
            max_mean: bins as f64,
            bins,
            bin_width: 1.0,
        }
    }

    fn hist(h: Vec<f64>) -> ClusterGaussian {
        let total: f64 = h.iter().sum();
        ClusterGaussian {
            support: support(h.len()),
            heights: h.iter().map(|x| x / total).collect(),
            normalized: true,
        }
    }

    fn point(bins: usize, at: usize) -> ClusterGaussian {
        let mut h = vec![0.0; bins];
        h[at] = 1.0;
        hist(h)
    }

    #[test]
    fn cosine_examples() {
        assert!((cosine_similarity(&v(&[2, 5, 1]), &v(&[2, 5, 1])).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_similarity(&v(&[1, 0, 0]), &v(&[0, 1, 0])).unwrap(), 0.0);
        let c = cosine_similarity(&v(&[1, 2, 3]), &v(&[3, 2, 1])).unwrap();
        assert!((c - 10.0 / 14.0).abs() < 1e-15);
        assert!((c - 0.714286).abs() < 1e-6);
        assert_eq!(cosine_similarity(&v(&[0, 0, 0]), &v(&[1, 2, 3])).unwrap(), 0.0);
        assert!(cosine_similarity(&v(&[1, 2]), &v(&[1, 2, 3])).is_err());
    }

    #[test]
    fn emd_examples() {
        let p = hist(vec![0.1, 0.4, 0.2, 0.3]);
        assert_eq!(discrete_emd(&p, &p).unwrap(), 0.0);
        assert_eq!(discrete_emd(&point(11, 0), &point(11, 10)).unwrap(), 10.0);
        assert_eq!(emd_normalized(&point(11, 0), &point(11, 10)).unwrap(), 10.0 / 11.0);
        assert_eq!(emd_normalized(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn emd_preconditions() {
        let p = point(5, 1);
        assert!(matches!(discrete_emd(&p, &point(6, 1)), Err(Error::SupportMismatch)));
        let mut heavy = p.clone();
        heavy.heights[0] = 1.0;
        assert!(matches!(discrete_emd(&p, &heavy), Err(Error::NotNormalized(_))));
    }

    #[test]
    fn w2_reference() {
        assert_eq!(gaussian_w2(0.0, 1.0, 0.0, 1.0), 0.0);
        assert_eq!(gaussian_w2(3.0, 1.0, 0.0, 1.0), 3.0);
        assert_eq!(gaussian_w2(0.0, 1.0, 0.0, 2.0), 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let (a, b, c, d) = (rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>());
            assert_eq!(gaussian_w2(a, b, c, d), gaussian_w2(c, d, a, b));
        }
    }

    proptest! {
        #[test]
        fn cosine_range_and_scale_invariance(
            a in proptest::collection::vec(0u32..50, 3),
            b in proptest::collection::vec(0u32..50, 3),
            lambda in 1u32..9,
        ) {
            let (va, vb) = (v(&a), v(&b));
            let c = cosine_similarity(&va, &vb).unwrap();
            prop_assert!((0.0..=1.0).contains(&c));
            prop_assert_eq!(c, cosine_similarity(&vb, &va).unwrap());
            let scaled = v(&b.iter().map(|x| x * lambda).collect::<Vec<_>>());
            prop_assert!((cosine_similarity(&va, &scaled).unwrap() - c).abs() < 1e-12);
        }

        #[test]
        fn emd_translation_covariance(
            h1 in proptest::collection::vec(0.01f64..1.0, 8),
            h2 in proptest::collection::vec(0.01f64..1.0, 8),
            shift in 0usize..6,
        ) {
            let pad = |h: &[f64]| {
                let mut out = vec![0.0; shift];
                out.extend_from_slice(h);
                out.extend(std::iter::repeat_n(0.0, 6 - shift));
                hist(out)
            };
            let base = |h: &[f64]| {
                let mut out = h.to_vec();
                out.extend(std::iter::repeat_n(0.0, 6));
                hist(out)
            };
            let d0 = discrete_emd(&base(&h1), &base(&h2)).unwrap();
            let d1 = discrete_emd(&pad(&h1), &pad(&h2)).unwrap();
            prop_assert!((d0 - d1).abs() < 1e-12);
        }
    }

    #[test]
    fn csv_round_trip_at_six_decimals() {
        let m = SimilarityMatrix {
            metric: Metric::Cosine,
            basis: Basis::TimeSpent,
            sources: vec![0, 1],
            targets: vec![0, 1, 2],
            values: vec![vec![0.5, 0.1234567, 1.0], vec![0.0, 0.25, 0.999_999_9]],
            degenerate_pairs: 0,
        };
        let text = m.to_csv();
        assert_eq!(text, "source,0,1,2\n0,0.500000,0.123457,1.000000\n1,0.000000,0.250000,1.000000\n");
        let back = SimilarityMatrix::from_csv(Metric::Cosine, Basis::TimeSpent, &text).unwrap();
        assert_eq!(back.get(0, 1), Some(0.123457));
        assert_eq!(back.to_csv(), text);
    }
}

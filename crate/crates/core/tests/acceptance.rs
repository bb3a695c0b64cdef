//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use chrono::NaiveDate;
use parkcast::aggregate::{aggregate_cluster, OccupancyMode};
use parkcast::estimate::{interval_cosine, interval_emd, interval_for, intersection_intervals, sort_best_first};
use parkcast::evaluate::{generate_synthetic_city, pearson, spearman, SyntheticCityConfig};
use parkcast::geocluster::{k_without_for, DEFAULT_RATIO};
use parkcast::ingest::{AmenityStats, AmenityStatsTable, Basis, OccupancyRecord};
use parkcast::learn::Learner;
use parkcast::represent::{ClusterGaussian, ClusterVector, CategoryScheme, SupportSpec};
use parkcast::similarity::{cosine_similarity, discrete_emd, gaussian_w2, Metric};
use parkcast::workspace::{run_pipeline, EvaluationReport, InputPaths, PipelineConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: impl Into<String>) -> Outcome {
    if ok {
        Ok(detail.into())
    } else {
        Err(detail.into())
    }
}

fn timed(limit: Duration, f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let out = f()?;
    let took = start.elapsed();
    check(took < limit, format!("{out}; {took:.2?} (limit {limit:?})"))
}

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

fn aggregation_table() -> Outcome {
    let t = |h| NaiveDate::from_ymd_opt(2011, 4, 2).unwrap().and_hms_opt(h, 0, 0).unwrap();
    let rec = |block: &str, h, price, spots, occupied| OccupancyRecord {
        block_id: block.into(),
        timestamp: t(h),
        price_rate: price,
        total_spots: spots,
        occupied,
    };
    let records = vec![
        rec("902", 7, 0.0, 46, 58),
        rec("32800", 7, 0.0, 32, 2),
        rec("33005", 7, 3.0, 36, 12),
        rec("902", 8, 2.0, 46, 54),
        rec("32800", 8, 4.0, 32, 5),
        rec("33005", 8, 3.0, 36, 22),
    ];
    let blocks: BTreeSet<String> = records.iter().map(|r| r.block_id.clone()).collect();
    let (points, _) = aggregate_cluster(&records, &blocks, OccupancyMode::CountMean);
    let got: Vec<(f64, f64, f64)> = points.iter().map(|p| (p.price_rate, p.total_spots, p.occupied)).collect();
    check(
        got == [(1.0, 38.0, 24.0), (3.0, 38.0, 27.0)],
        format!("rows {got:?}"),
    )
}

// ---------------------------------------------------------------------------
// EMD against a min-cost-flow transport solver
// ---------------------------------------------------------------------------

/// Successive shortest paths (Bellman-Ford) on the complete bipartite
/// transport graph with costs |i - j| * w.
fn transport_cost(supply: &[f64], demand: &[f64], w: f64) -> f64 {
    let n = supply.len();
    let (src, sink) = (2 * n, 2 * n + 1);
    let nodes = 2 * n + 2;
    // (to, cap, cost, rev)
    let mut graph: Vec<Vec<(usize, f64, f64, usize)>> = vec![Vec::new(); nodes];
    let add = |g: &mut Vec<Vec<(usize, f64, f64, usize)>>, a: usize, b: usize, cap: f64, cost: f64| {
        let (ra, rb) = (g[b].len(), g[a].len());
        g[a].push((b, cap, cost, ra));
        g[b].push((a, 0.0, -cost, rb));
    };
    for i in 0..n {
        add(&mut graph, src, i, supply[i], 0.0);
        add(&mut graph, n + i, sink, demand[i], 0.0);
        for j in 0..n {
            add(&mut graph, i, n + j, f64::INFINITY, (i as f64 - j as f64).abs() * w);
        }
    }
    let eps = 1e-15;
    let mut total = 0.0;
    loop {
        let mut dist = vec![f64::INFINITY; nodes];
        let mut prev: Vec<Option<(usize, usize)>> = vec![None; nodes];
        dist[src] = 0.0;
        for _ in 0..nodes {
            let mut changed = false;
            for u in 0..nodes {
                if dist[u].is_infinite() {
                    continue;
                }
                for (k, &(v, cap, cost, _)) in graph[u].iter().enumerate() {
                    if cap > eps && dist[u] + cost < dist[v] - 1e-12 {
                        dist[v] = dist[u] + cost;
                        prev[v] = Some((u, k));
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        if dist[sink].is_infinite() {
            return total;
        }
        let mut push = f64::INFINITY;
        let mut v = sink;
        while let Some((u, k)) = prev[v] {
            push = push.min(graph[u][k].1);
            v = u;
        }
        let mut v = sink;
        while let Some((u, k)) = prev[v] {
            graph[u][k].1 -= push;
            let (to, rev) = (graph[u][k].0, graph[u][k].3);
            graph[to][rev].1 += push;
            v = u;
        }
        total += push * dist[sink];
    }
}

fn random_histogram(rng: &mut ChaCha8Rng, support: SupportSpec) -> ClusterGaussian {
    let raw: Vec<f64> = (0..support.bins)
        .map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random::<f64>() })
        .collect();
    let s: f64 = raw.iter().sum::<f64>().max(1e-300) * support.bin_width;
    let mut g = ClusterGaussian::zeros(support);
    g.heights = raw.iter().map(|h| h / s).collect();
    if g.mass() == 0.0 {
        g.heights[0] = 1.0 / support.bin_width;
    }
    g.normalized = true;
    g
}

fn emd_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let support = SupportSpec {
        offset: 0.0,
        max_mean: 10.0,
        bins: 10,
        bin_width: 1.0,
    };
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (p, q) = (random_histogram(&mut rng, support), random_histogram(&mut rng, support));
        let mass = |g: &ClusterGaussian| g.heights.iter().map(|h| h * support.bin_width).collect::<Vec<_>>();
        let oracle = transport_cost(&mass(&p), &mass(&q), support.bin_width);
        worst = worst.max((discrete_emd(&p, &q).map_err(|e| e.to_string())? - oracle).abs());
    }
    let mut triangle_violations = 0;
    let mut asymmetric = 0;
    for _ in 0..1000 {
        let p = random_histogram(&mut rng, support);
        let q = random_histogram(&mut rng, support);
        let r = random_histogram(&mut rng, support);
        let d = |a: &ClusterGaussian, b: &ClusterGaussian| discrete_emd(a, b).unwrap();
        if d(&p, &r) > d(&p, &q) + d(&q, &r) + 1e-12 {
            triangle_violations += 1;
        }
        if (d(&p, &q) - d(&q, &p)).abs() > 1e-12 {
            asymmetric += 1;
        }
    }
    check(
        worst <= 1e-9 && triangle_violations == 0 && asymmetric == 0,
        format!("max |emd - transport| {worst:.2e}; triangle violations {triangle_violations}; asymmetric {asymmetric}"),
    )
}

fn w2_closed_form() -> Outcome {
    let cases = [
        ((0.0, 1.0, 0.0, 1.0), 0.0),
        ((3.0, 1.0, 0.0, 1.0), 3.0),
        ((0.0, 1.0, 0.0, 2.0), 1.0),
    ];
    let exact = cases.iter().all(|&((m1, s1, m2, s2), want)| gaussian_w2(m1, s1, m2, s2) == want);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let symmetric = (0..1000).all(|_| {
        let (m1, m2) = (rng.random_range(-100.0..100.0), rng.random_range(-100.0..100.0));
        let (s1, s2) = (rng.random_range(0.0..50.0), rng.random_range(0.0..50.0));
        gaussian_w2(m1, s1, m2, s2) == gaussian_w2(m2, s2, m1, s1)
    });
    check(exact && symmetric, format!("three cases exact {exact}; symmetric {symmetric}"))
}

fn cosine_range() -> Outcome {
    let v = |c: &[u32]| ClusterVector { counts: c.to_vec() };
    let s = cosine_similarity(&v(&[1, 2, 3]), &v(&[3, 2, 1])).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut out_of_range = 0;
    for _ in 0..1000 {
        let n = rng.random_range(1..8);
        let a: Vec<u32> = (0..n).map(|_| rng.random_range(0..20)).collect();
        let b: Vec<u32> = (0..n).map(|_| rng.random_range(0..20)).collect();
        let c = cosine_similarity(&v(&a), &v(&b)).unwrap();
        if !(0.0..=1.0).contains(&c) {
            out_of_range += 1;
        }
    }
    check(
        (s - 0.714286).abs() <= 1e-6 && out_of_range == 0,
        format!("(1,2,3)·(3,2,1) = {s:.6}; out of [0,1]: {out_of_range}"),
    )
}

fn cluster_count_rule() -> Outcome {
    let (a, b) = (k_without_for(8, DEFAULT_RATIO), k_without_for(16, DEFAULT_RATIO));
    check(a == 20 && b == 41, format!("8 -> {a}, 16 -> {b}"))
}

// ---------------------------------------------------------------------------
// Category tables
// ---------------------------------------------------------------------------

const TIME_SPENT_TABLE: [(&str, f64, f64, u8); 32] = [
    ("arts_centre", 110.0, 37.0, 3),
    ("bank", 42.0, 65.0, 2),
    ("bar", 121.0, 38.0, 3),
    ("cafe", 76.0, 39.0, 2),
    ("clinic", 100.0, 29.0, 3),
    ("clothes_store", 41.0, 37.0, 2),
    ("community_centre", 119.0, 40.0, 3),
    ("dentist", 104.0, 35.0, 3),
    ("doctors", 60.0, 42.0, 2),
    ("embassy", 75.0, 24.0, 2),
    ("fast_food", 31.0, 15.0, 2),
    ("grocery", 20.0, 10.0, 1),
    ("gym", 100.0, 22.0, 3),
    ("hookah_lounge", 130.0, 17.0, 3),
    ("ice_cream", 23.0, 7.0, 1),
    ("karaoke", 188.0, 15.0, 3),
    ("laundry", 78.0, 16.0, 2),
    ("library", 83.0, 13.0, 2),
    ("music_school", 120.0, 30.0, 3),
    ("nightclub", 189.0, 20.0, 3),
    ("pharmacy", 25.0, 20.0, 1),
    ("post_office", 16.0, 2.0, 1),
    ("pub", 135.0, 21.0, 3),
    ("restaurant", 135.0, 32.0, 3),
    ("salon", 141.0, 53.0, 3),
    ("shelter", 90.0, 0.0, 2),
    ("shop", 43.0, 21.0, 2),
    ("spa", 161.0, 54.0, 3),
    ("stripclub", 140.0, 46.0, 3),
    ("studio", 60.0, 0.0, 2),
    ("veterinary", 67.0, 29.0, 2),
    ("vintage_modern_resale", 38.0, 32.0, 2),
];

const AREA_TABLE: [(&str, f64, f64, u8); 48] = [
    ("arts_centre", 68.0, 60.0, 2),
    ("bank", 39.0, 20.0, 2),
    ("bar", 19.0, 8.0, 1),
    ("bicycle_parking", 8.0, 7.0, 1),
    ("biergarten", 11.0, 12.0, 1),
    ("brokerage", 39.0, 9.0, 2),
    ("bus_station", 588.0, 737.0, 3),
    ("cafe", 17.0, 10.0, 1),
    ("car_rental", 70.0, 43.0, 2),
    ("car_wash", 43.0, 48.0, 2),
    ("childcare", 101.0, 130.0, 3),
    ("cinema", 75.0, 43.0, 2),
    ("clinic", 61.0, 32.0, 2),
    ("community_centre", 52.0, 74.0, 2),
    ("conference_centre", 401.0, 519.0, 3),
    ("courthouse", 459.0, 201.0, 3),
    ("dentist", 17.0, 12.0, 1),
    ("doctors", 324.0, 568.0, 3),
    ("embassy", 68.0, 38.0, 2),
    ("fast_food", 25.0, 24.0, 1),
    ("fire_station", 52.0, 27.0, 2),
    ("fountain", 24.0, 22.0, 1),
    ("fuel", 25.0, 27.0, 1),
    ("library", 102.0, 124.0, 3),
    ("marketplace", 325.0, 228.0, 3),
    ("music_rehearsal_place", 33.0, 15.0, 1),
    ("nightclub", 32.0, 9.0, 1),
    ("nursing_home", 97.0, 47.0, 2),
    ("parking", 182.0, 309.0, 3),
    ("pharmacy", 65.0, 38.0, 2),
    ("place_of_worship", 60.0, 62.0, 2),
    ("police", 137.0, 124.0, 3),
    ("post_office", 39.0, 11.0, 2),
    ("pub", 25.0, 25.0, 1),
    ("public_building", 280.0, 236.0, 3),
    ("recycling", 28.0, 20.0, 1),
    ("restaurant", 22.0, 16.0, 1),
    ("school", 740.0, 1280.0, 3),
    ("social_centre", 30.0, 21.0, 1),
    ("social_facility", 356.0, 801.0, 3),
    ("stripclub", 50.0, 10.0, 2),
    ("studio", 268.0, 307.0, 3),
    ("swimming_pool", 16.0, 9.0, 1),
    ("swingerclub", 27.0, 4.0, 1),
    ("theatre", 174.0, 191.0, 3),
    ("toilets", 7.0, 5.0, 1),
    ("training", 72.0, 94.0, 2),
    ("veterinary", 21.0, 7.0, 1),
];

fn category_tables() -> Outcome {
    let mut mismatches = Vec::new();
    for (basis, table) in [(Basis::TimeSpent, &TIME_SPENT_TABLE[..]), (Basis::Area, &AREA_TABLE[..])] {
        let scheme = CategoryScheme::for_basis(basis);
        let mut stats = AmenityStatsTable::new(basis);
        for &(name, mean, stdev, cat) in table {
            if scheme.categorize(mean) != cat {
                mismatches.push(format!("{basis}/{name}"));
            }
            let row = AmenityStats {
                amenity: name.into(),
                mean,
                stdev,
                category: cat,
            };
            if stats.insert(row).is_err() {
                mismatches.push(format!("{basis}/{name} rejected"));
            }
        }
    }
    check(
        mismatches.is_empty(),
        format!("{} + {} rows; mismatches {mismatches:?}", TIME_SPENT_TABLE.len(), AREA_TABLE.len()),
    )
}

// ---------------------------------------------------------------------------
// Intervals
// ---------------------------------------------------------------------------

fn e<T>(r: parkcast::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn interval_algebra() -> Outcome {
    let close = |a: (f64, f64), b: (f64, f64)| (a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12;
    let span = |i: parkcast::estimate::EstimationInterval| (i.lo, i.hi);
    let examples = [
        close(span(e(interval_cosine(0.5, 1.0))?), (0.5, 0.5)),
        close(span(e(interval_cosine(0.5, 0.8))?), (0.3, 0.7)),
        close(span(e(interval_cosine(0.95, 0.9))?), (0.85, 1.0)),
        close(span(e(interval_emd(0.5, 0.0))?), (0.5, 0.5)),
        close(span(e(interval_emd(0.4, 0.25))?), (0.15, 0.65)),
        close(span(e(interval_emd(0.1, 0.3))?), (0.0, 0.4)),
    ];
    let iv = |lo: f64, hi: f64, sim: f64, src| {
        let mut i = interval_for(Metric::Cosine, (lo + hi) / 2.0, sim, src).unwrap();
        i.lo = lo;
        i.hi = hi;
        i
    };
    let running = e(intersection_intervals(&[iv(0.3, 0.7, 0.9, 0), iv(0.4, 0.8, 0.8, 1)]))?;
    let disjoint = e(intersection_intervals(&[iv(0.1, 0.2, 0.9, 0), iv(0.5, 0.6, 0.8, 1)]))?;
    let chains = running.len() == 2
        && running[0].is_some_and(|s| close(s, (0.3, 0.7)))
        && running[1].is_some_and(|s| close(s, (0.4, 0.7)))
        && disjoint[0].is_some_and(|s| close(s, (0.1, 0.2)))
        && disjoint[1].is_none();

    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut violations = 0;
    for case in 0..1000 {
        let metric = Metric::ALL[case % 2];
        let n = rng.random_range(1..12);
        let mut rows: Vec<_> = (0..n)
            .map(|src| interval_for(metric, rng.random::<f64>(), rng.random::<f64>(), src).unwrap())
            .collect();
        violations += rows.iter().filter(|r| !r.contains(r.point)).count();
        sort_best_first(&mut rows);
        let spans = intersection_intervals(&rows).unwrap();
        let mut prev: Option<(f64, f64)> = Some((0.0, 1.0));
        let mut emptied = false;
        for (row, s) in rows.iter().zip(&spans) {
            match (s, prev) {
                (Some(s), Some(p)) => {
                    if emptied || s.0 < p.0 || s.1 > p.1 || s.0 < row.lo || s.1 > row.hi || s.0 > s.1 {
                        violations += 1;
                    }
                }
                (Some(_), None) => violations += 1,
                (None, _) => emptied = true,
            }
            prev = *s;
        }
    }
    let ok = examples.iter().all(|&b| b) && chains && violations == 0;
    check(
        ok,
        format!("examples {}/6; chain examples {chains}; property violations {violations} over 1000 lists", examples.iter().filter(|&&b| b).count()),
    )
}

// ---------------------------------------------------------------------------
// Correlations
// ---------------------------------------------------------------------------

fn pearson_direct(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (sx, sy) = (x.iter().sum::<f64>(), y.iter().sum::<f64>());
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|b| b * b).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

/// Rank = number strictly below + half the tie group + 1/2.
fn ranks_by_counting(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&v| {
            let below = x.iter().filter(|&&w| w < v).count() as f64;
            let equal = x.iter().filter(|&&w| w == v).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

fn correlations() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let (mut worst_p, mut worst_s): (f64, f64) = (0.0, 0.0);
    let mut undefined = 0;
    for case in 0..500 {
        let n = rng.random_range(3..40);
        let ties = case % 2 == 0;
        let draw = |rng: &mut ChaCha8Rng| if ties { f64::from(rng.random_range(0..5u8)) } else { rng.random::<f64>() };
        let x: Vec<f64> = (0..n).map(|_| draw(&mut rng)).collect();
        let y: Vec<f64> = (0..n).map(|_| draw(&mut rng)).collect();
        match (pearson(&x, &y), spearman(&x, &y)) {
            (Some(p), Some(s)) => {
                worst_p = worst_p.max((p - pearson_direct(&x, &y)).abs());
                let (rx, ry) = (ranks_by_counting(&x), ranks_by_counting(&y));
                worst_s = worst_s.max((s - pearson_direct(&rx, &ry)).abs());
            }
            _ => undefined += 1,
        }
    }
    check(
        worst_p <= 1e-12 && worst_s <= 1e-12,
        format!("max pearson diff {worst_p:.1e}; max spearman diff {worst_s:.1e}; constant samples skipped {undefined}"),
    )
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

fn city(dir: &Path) -> InputPaths {
    let config = SyntheticCityConfig {
        n_blocks: 200,
        n_archetypes: 3,
        days: 30,
        seed: 42,
        ..SyntheticCityConfig::default()
    };
    let p = generate_synthetic_city(&config).unwrap().write_to(dir).unwrap();
    InputPaths {
        occupancy: p.occupancy,
        blocks: p.blocks,
        pois: p.pois,
        time_spent: p.stats,
        area: None,
    }
}

fn pipeline(root: &Path) -> (PathBuf, EvaluationReport, Duration) {
    let start = Instant::now();
    let inputs = city(&root.join("city"));
    let config = PipelineConfig {
        merge_distance_m: 100.0,
        k_with: 8,
        seed: 42,
        ..PipelineConfig::new(inputs)
    };
    let ws = root.join("ws");
    let (_, report) = run_pipeline(&ws, &config).unwrap();
    (ws, report.expect("evaluation configured"), start.elapsed())
}

fn end_to_end(report: &EvaluationReport, took: Duration) -> Outcome {
    let rho = |m| report.correlation(Basis::TimeSpent, m).and_then(|c| c.spearman);
    let (cos, emd) = (rho(Metric::Cosine), rho(Metric::Emd));
    let ok = took < Duration::from_secs(120) && cos.is_some_and(|c| c <= -0.3) && emd.is_some_and(|e| e >= 0.2);
    check(
        ok,
        format!("cosine spearman {cos:.3?} (<= -0.3); emd spearman {emd:.3?} (>= 0.2); {took:.1?} (limit 120s)"),
    )
}

fn gbt_dominance(report: &EvaluationReport) -> Outcome {
    let gbt = report
        .best_methods
        .iter()
        .find(|(l, _)| *l == Learner::Gbt)
        .map_or(0.0, |(_, f)| *f);
    check(gbt >= 0.5, format!("gbt best or tied on {:.1}% of pairs", 100.0 * gbt))
}

fn files_under(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_path_buf();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn determinism(a: &Path, b: &Path) -> Outcome {
    let (fa, fb) = (files_under(a), files_under(b));
    let differing: Vec<String> = fa
        .keys()
        .chain(fb.keys())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .filter(|k| fa.get(*k) != fb.get(*k))
        .map(|k| k.display().to_string())
        .collect();
    check(
        differing.is_empty() && !fa.is_empty(),
        format!("{} files compared; differing {differing:?}", fa.len()),
    )
}

fn main() {
    let mut failures = 0;
    let mut report = |name: &str, outcome: Outcome| {
        match &outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failures += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    };

    report("aggregation count-mean table", timed(Duration::from_secs(1), aggregation_table));
    report("emd vs transport oracle, metric axioms", timed(Duration::from_secs(10), emd_oracle));
    report("gaussian w2 closed form", w2_closed_form());
    report("cosine similarity", cosine_range());
    report("unmonitored cluster count", cluster_count_rule());
    report("amenity categories", category_tables());
    report("interval algebra", interval_algebra());
    report("pearson/spearman oracles", correlations());

    let tmp = tempfile::tempdir().unwrap();
    let (ws_a, eval, took) = pipeline(&tmp.path().join("a"));
    report("synthetic end-to-end correlations", end_to_end(&eval, took));
    report("gbt vs decision tree", gbt_dominance(&eval));
    let (ws_b, _, _) = pipeline(&tmp.path().join("b"));
    let city_same = determinism(&tmp.path().join("a/city"), &tmp.path().join("b/city"));
    report(
        "determinism",
        city_same.and_then(|c| determinism(&ws_a, &ws_b).map(|w| format!("inputs: {c}; workspace: {w}"))),
    );

    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}

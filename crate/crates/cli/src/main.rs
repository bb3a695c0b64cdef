use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use parkcast::aggregate::Datapoints;
use parkcast::estimate::timestamps_for;
use parkcast::evaluate::{generate_synthetic_city, SyntheticCityConfig};
use parkcast::geocluster::DEFAULT_RATIO;
use parkcast::ingest::Basis;
use parkcast::learn::Learner;
use parkcast::similarity::Metric;
use parkcast::workspace::{EvaluationConfig, InputPaths, PipelineConfig, Workspace};

#[derive(Parser)]
#[command(name = "parkcast", version, about = "Parking occupancy estimates for blocks without sensors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct WorkspaceArg {
    #[arg(long, short = 'w', default_value = "workspace")]
    workspace: PathBuf,
}

#[derive(Args, Clone)]
struct InputArgs {
    #[arg(long)]
    occupancy: PathBuf,
    #[arg(long)]
    blocks: PathBuf,
    #[arg(long)]
    pois: PathBuf,
    /// Amenity time-spent table.
    #[arg(long)]
    stats: PathBuf,
    /// Amenity area table; derived from POI areas when omitted.
    #[arg(long)]
    area: Option<PathBuf>,
}

impl InputArgs {
    fn paths(&self) -> InputPaths {
        InputPaths {
            occupancy: self.occupancy.clone(),
            blocks: self.blocks.clone(),
            pois: self.pois.clone(),
            time_spent: self.stats.clone(),
            area: self.area.clone(),
        }
    }
}

/// `train:test`, e.g. `aggregate:all`.
fn parse_datapoint_pair(s: &str) -> Result<(Datapoints, Datapoints), String> {
    let (a, b) = s.split_once(':').unwrap_or((s, s));
    Ok((a.parse().map_err(|e| format!("{e}"))?, b.parse().map_err(|e| format!("{e}"))?))
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic city (blocks, POIs, occupancy, time-spent table).
    Synth {
        #[arg(long, default_value_t = 200)]
        blocks: usize,
        #[arg(long, default_value_t = 3)]
        archetypes: usize,
        #[arg(long, default_value_t = 30)]
        days: u32,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
        #[arg(long, default_value = "city")]
        out: PathBuf,
    },
    /// Copy and validate inputs, match amenities to blocks.
    Ingest {
        #[command(flatten)]
        ws: WorkspaceArg,
        #[command(flatten)]
        inputs: InputArgs,
        #[arg(long, default_value_t = 100.0)]
        merge_distance: f64,
    },
    /// Split blocks into clusters and write per-cluster training rows.
    Cluster {
        #[command(flatten)]
        ws: WorkspaceArg,
        #[arg(long, default_value_t = 8)]
        k: usize,
        #[arg(long, default_value_t = DEFAULT_RATIO)]
        ratio: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Fit one model per monitored cluster.
    Train {
        #[command(flatten)]
        ws: WorkspaceArg,
        #[arg(long, default_value = "gbt")]
        learner: Learner,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value = "aggregate")]
        datapoints: Datapoints,
    },
    /// Build cluster representations and similarity matrices.
    Similarity {
        #[command(flatten)]
        ws: WorkspaceArg,
        /// All metrics when omitted.
        #[arg(long)]
        metric: Option<Metric>,
        /// All bases when omitted.
        #[arg(long)]
        basis: Option<Basis>,
    },
    /// Print estimate tables for an unmonitored cluster.
    Estimate {
        #[command(flatten)]
        ws: WorkspaceArg,
        #[arg(long)]
        target: usize,
        /// Defaults to the workspace's configured date.
        #[arg(long)]
        date: Option<NaiveDate>,
        /// Comma-separated hours; defaults to the configured grid.
        #[arg(long, value_delimiter = ',')]
        hours: Vec<u32>,
        #[arg(long, default_value = "cosine")]
        metric: Metric,
        #[arg(long, default_value = "time_spent")]
        basis: Basis,
    },
    /// Transfer errors, best learners and similarity correlations.
    Evaluate {
        #[command(flatten)]
        ws: WorkspaceArg,
        /// Re-cluster when it differs from the workspace.
        #[arg(long)]
        k: Option<usize>,
        /// Re-match amenities when it differs from the workspace.
        #[arg(long)]
        merge_distance: Option<f64>,
        /// Basis whose correlations are printed; all are written.
        #[arg(long, default_value = "time_spent")]
        basis: Basis,
        #[arg(long, default_value = "aggregate:aggregate", value_parser = parse_datapoint_pair)]
        datapoints: (Datapoints, Datapoints),
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Correlate all pairs at once instead of per source cluster.
        #[arg(long)]
        pooled: bool,
        /// Also run the other train/test datapoint combinations.
        #[arg(long)]
        ablation: bool,
        /// Also compare leave-one-out total models with cluster descriptors.
        #[arg(long)]
        extended: bool,
    },
    /// Every stage from raw inputs to evaluation.
    Run {
        #[command(flatten)]
        ws: WorkspaceArg,
        #[command(flatten)]
        inputs: InputArgs,
        #[arg(long, default_value_t = 100.0)]
        merge_distance: f64,
        #[arg(long, default_value_t = 8)]
        k: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value = "gbt")]
        learner: Learner,
        #[arg(long)]
        skip_evaluation: bool,
    },
    /// Serve the workspace over HTTP.
    Serve {
        #[command(flatten)]
        ws: WorkspaceArg,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
    },
}

fn open(ws: &WorkspaceArg) -> Result<Workspace> {
    Workspace::open(&ws.workspace).with_context(|| format!("opening workspace {}", ws.workspace.display()))
}

fn stored_inputs(ws: &Workspace) -> InputPaths {
    let p = |rel: &str| ws.path(rel);
    InputPaths {
        occupancy: p("inputs/occupancy.csv"),
        blocks: p("inputs/blocks.geojson"),
        pois: p("inputs/pois.geojson"),
        time_spent: p("inputs/time_spent.csv"),
        area: Some(p("inputs/area.csv")),
    }
}

/// Reruns the stages downstream of a changed parameter.
fn refresh(ws: &Workspace, k: Option<usize>, merge_distance: Option<f64>) -> Result<()> {
    let config = ws.config()?;
    let rematch = merge_distance.is_some_and(|d| Some(d) != config.merge_distance_m);
    let part = config.partition.context("workspace has no partition; run `parkcast cluster` first")?;
    let recluster = k.is_some_and(|k| k != part.k_with);
    if rematch {
        ws.ingest(&stored_inputs(ws), merge_distance.expect("checked above"))?;
    }
    if recluster {
        ws.cluster(k.expect("checked above"), part.ratio, part.seed)?;
        ws.aggregate()?;
        if let Some(t) = config.training {
            ws.train(t.learner, t.datapoints, t.seed)?;
        }
    }
    if rematch || recluster {
        ws.represent()?;
        ws.similarity_all()?;
    }
    Ok(())
}

fn print_file(ws: &Workspace, rel: &str) -> Result<()> {
    if let Ok(body) = ws.read(rel) {
        println!("# {rel}\n{body}");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth {
            blocks,
            archetypes,
            days,
            seed,
            noise,
            out,
        } => {
            let city = generate_synthetic_city(&SyntheticCityConfig {
                n_blocks: blocks,
                n_archetypes: archetypes,
                days,
                seed,
                noise,
                ..SyntheticCityConfig::default()
            })?;
            let p = city.write_to(&out)?;
            for path in [p.blocks, p.pois, p.occupancy, p.stats] {
                println!("{}", path.display());
            }
        }
        Command::Ingest {
            ws,
            inputs,
            merge_distance,
        } => {
            let w = Workspace::create(&ws.workspace)?;
            let report = w.ingest(&inputs.paths(), merge_distance)?;
            println!(
                "{} records ({} rejected), {} blocks ({} monitored), {} POIs ({} with amenity)",
                report.records,
                report.rejected.len(),
                report.blocks,
                report.monitored_blocks,
                report.pois,
                report.usable_pois
            );
            for r in report.rejected.iter().take(20) {
                eprintln!("line {}: {}", r.line, r.message);
            }
            if !report.unknown_amenities.is_empty() {
                eprintln!("amenities without time-spent data: {}", report.unknown_amenities.join(", "));
            }
        }
        Command::Cluster { ws, k, ratio, seed } => {
            let w = open(&ws)?;
            let p = w.cluster(k, ratio, seed)?;
            for (id, diag) in w.aggregate()? {
                println!(
                    "with_data-{id}: {} rows from {} readings (shrink {:.1})",
                    diag.output_rows,
                    diag.input_rows,
                    diag.shrink_factor()
                );
            }
            println!("{} monitored and {} unmonitored clusters", p.k_with, p.k_without);
        }
        Command::Train {
            ws,
            learner,
            seed,
            datapoints,
        } => {
            let index = open(&ws)?.train(learner, datapoints, seed)?;
            println!("cluster,rows,cv_rmse");
            for m in &index.models {
                println!("{},{},{:.4}", m.cluster_id, m.rows, m.cv_rmse);
            }
        }
        Command::Similarity { ws, metric, basis } => {
            let w = open(&ws)?;
            let reps = w.represent()?;
            let bases: Vec<Basis> = match basis {
                Some(b) if !reps.contains_key(&b) => bail!("no amenity statistics for basis {b}"),
                Some(b) => vec![b],
                None => reps.keys().copied().collect(),
            };
            let metrics = metric.map_or_else(|| Metric::ALL.to_vec(), |m| vec![m]);
            for &b in &bases {
                for &m in &metrics {
                    let matrix = w.similarity(m, b)?;
                    println!("similarity/{m}-{b}.csv ({}x{})", matrix.sources.len(), matrix.targets.len());
                }
            }
        }
        Command::Estimate {
            ws,
            target,
            date,
            hours,
            metric,
            basis,
        } => {
            let w = open(&ws)?;
            let config = w.config()?;
            let hours = if hours.is_empty() { config.estimate_hours } else { hours };
            if let Some(h) = hours.iter().find(|h| **h > 23) {
                bail!("hour {h} out of range");
            }
            let times = timestamps_for(date.unwrap_or(config.estimate_date), &hours);
            for table in w.estimate(target, &times, metric, basis)? {
                println!("# cluster {target} at {} ({metric}, {basis})", table.timestamp);
                print!("{}", table.to_text());
            }
        }
        Command::Evaluate {
            ws,
            k,
            merge_distance,
            basis,
            datapoints,
            seed,
            pooled,
            ablation,
            extended,
        } => {
            let w = open(&ws)?;
            refresh(&w, k, merge_distance)?;
            let report = w.evaluate(&EvaluationConfig {
                train_on: datapoints.0,
                test_on: datapoints.1,
                seed,
                pooled,
                ablation,
                extended,
                ..EvaluationConfig::default()
            })?;
            for rel in ["best_methods.csv", "datapoints.csv", "correlations.csv", "total_models.csv"] {
                print_file(&w, &format!("evaluation/{rel}"))?;
            }
            for metric in Metric::ALL {
                if let Some(c) = report.correlation(basis, metric) {
                    println!(
                        "{basis} {metric}: pearson {} spearman {} (undefined rows: {})",
                        c.pearson.map_or("n/a".into(), |v| format!("{v:.2}")),
                        c.spearman.map_or("n/a".into(), |v| format!("{v:.2}")),
                        c.excluded_pearson.max(c.excluded_spearman)
                    );
                }
            }
        }
        Command::Run {
            ws,
            inputs,
            merge_distance,
            k,
            seed,
            learner,
            skip_evaluation,
        } => {
            let config = PipelineConfig {
                merge_distance_m: merge_distance,
                k_with: k,
                seed,
                learner,
                evaluation: (!skip_evaluation).then(|| EvaluationConfig {
                    seed,
                    primary: learner,
                    ..EvaluationConfig::default()
                }),
                ..PipelineConfig::new(inputs.paths())
            };
            let (w, _) = parkcast::workspace::run_pipeline(&ws.workspace, &config)?;
            print_file(&w, "evaluation/correlations.csv")?;
            println!("workspace ready at {}", display(w.root()));
        }
        Command::Serve { ws, port, host } => {
            let root = open(&ws)?.root().to_path_buf();
            let addr = SocketAddr::new(host, port);
            eprintln!("serving {} on http://{addr}", display(&root));
            tokio::runtime::Runtime::new()?.block_on(parkcast_serve::serve(root, addr))?;
        }
    }
    Ok(())
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use fnrgnn::ablation;
use fnrgnn::checkpoint::Checkpoint;
use fnrgnn::error::{Error, Result};
use fnrgnn::graph_io::{load_graph, write_edges, write_nodes};
use fnrgnn::json;
use fnrgnn::output::{write_curves, MetricsDocument, ResultDocument};
use fnrgnn::synthetic::{generate_synthetic, SyntheticConfig};
use fnrgnn_core::gradcheck;
use fnrgnn_core::metrics::{mean_gap, wasserstein_1d, MetricsReport};
use fnrgnn_core::fairness::GroupIndex;
use fnrgnn_core::trainer::{self, Ablation, TrainConfig};
use fnrgnn_core::Graph;

const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Parser)]
#[command(name = "fnrgnn", version, about = "Fairness-aware GCN node regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic biased graph.
    Generate {
        /// Synthetic config JSON; defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_nodes: PathBuf,
        #[arg(long)]
        out_edges: PathBuf,
    },
    /// Train one model and write result, metrics, curves and checkpoint.
    Train {
        #[arg(long)]
        nodes: PathBuf,
        #[arg(long)]
        edges: PathBuf,
        /// Training config JSON; defaults are used when omitted.
        #[arg(long, env = "FNRGNN_CONFIG")]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        ablation: Option<Ablation>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute metrics from a checkpoint.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        nodes: PathBuf,
        #[arg(long)]
        edges: PathBuf,
        /// Also write the metrics document here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every ablation case over several seeds.
    Ablate {
        #[arg(long)]
        nodes: PathBuf,
        #[arg(long)]
        edges: PathBuf,
        #[arg(long, env = "FNRGNN_CONFIG")]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5)]
        seeds: usize,
        /// Worker threads.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Finite-difference check of all model gradients.
    Gradcheck {
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

fn load_train_config(path: Option<&Path>) -> Result<TrainConfig> {
    let cfg: TrainConfig = match path {
        Some(p) => json::read(p, false)?,
        None => TrainConfig::default(),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn load(nodes: &Path, edges: &Path) -> Result<Graph> {
    let (g, warnings) = load_graph(nodes, edges)?;
    if warnings.self_loops > 0 {
        eprintln!("warning: dropped {} self-loop(s)", warnings.self_loops);
    }
    if warnings.duplicate_edges > 0 {
        eprintln!("warning: dropped {} duplicate edge(s)", warnings.duplicate_edges);
    }
    Ok(g)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn print_report(r: &MetricsReport) {
    println!(
        "{:<5}  mse {:.4}  mae {:.4}  mg {:.4}  vg {:.4}  wd {:.4}",
        r.split, r.mse, r.mae, r.mg, r.vg, r.wd
    );
}

fn generate(config: Option<&Path>, seed: Option<u64>, nodes: &Path, edges: &Path) -> Result<()> {
    let mut cfg: SyntheticConfig = match config {
        Some(p) => json::read(p, false)?,
        None => SyntheticConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let g = generate_synthetic(&cfg)?;
    write_nodes(nodes, &g)?;
    write_edges(edges, &g)?;
    let all: Vec<usize> = (0..g.num_nodes()).collect();
    let groups = GroupIndex::from_nodes(&all, g.sensitive());
    let y = g.targets();
    let y0: Vec<f64> = groups.g0.iter().map(|&i| y[i]).collect();
    let y1: Vec<f64> = groups.g1.iter().map(|&i| y[i]).collect();
    println!(
        "generated {} nodes, {} edges; label mg {:.4}, label wd {:.4}",
        g.num_nodes(),
        g.edges().len(),
        mean_gap(y, &groups)?,
        wasserstein_1d(&y0, &y1)?
    );
    Ok(())
}

fn train(
    nodes: &Path,
    edges: &Path,
    config: Option<&Path>,
    seed: Option<u64>,
    case: Option<Ablation>,
    out: &Path,
) -> Result<()> {
    let mut cfg = load_train_config(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(a) = case {
        cfg.ablation = a;
    }
    let g = load(nodes, edges)?;
    create_dir(out)?;
    let start = Instant::now();
    let mut result = trainer::train(&g, &cfg)?;
    result.wall_clock_secs = start.elapsed().as_secs_f64();

    json::write(&out.join("result.json"), &ResultDocument::new(&cfg, &result))?;
    json::write(
        &out.join("metrics.json"),
        &MetricsDocument {
            metrics: result.reports.clone(),
        },
    )?;
    write_curves(&out.join("curves.csv"), &result.curves)?;
    Checkpoint::from_result(&result).save(&out.join("checkpoint.json"))?;

    println!(
        "{} epochs, best epoch {}, {:.1}s",
        result.epochs_run, result.best_epoch, result.wall_clock_secs
    );
    for r in [&result.reports.train, &result.reports.val, &result.reports.test] {
        print_report(r);
    }
    Ok(())
}

fn evaluate(checkpoint: &Path, nodes: &Path, edges: &Path, out: Option<&Path>) -> Result<()> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let g = load(nodes, edges)?;
    let (params, prepared) = ckpt.restore(&g)?;
    let reports = trainer::evaluate(&g, &prepared, &params)?;
    for r in [&reports.train, &reports.val, &reports.test] {
        print_report(r);
    }
    if let Some(p) = out {
        json::write(p, &MetricsDocument { metrics: reports })?;
    }
    Ok(())
}

fn ablate(
    nodes: &Path,
    edges: &Path,
    config: Option<&Path>,
    out: &Path,
    seeds: usize,
    jobs: usize,
) -> Result<()> {
    let cfg = load_train_config(config)?;
    let g = load(nodes, edges)?;
    create_dir(out)?;
    let seeds = ablation::default_seeds(&cfg, seeds);
    let runs = ablation::run_ablation(&g, &cfg, &seeds, jobs)?;
    let summary = trainer::summarize(&runs);
    ablation::write_runs(&out.join("runs.csv"), &runs)?;
    ablation::write_summary(&out.join("summary.csv"), &summary)?;
    println!("{:<15} {:>4} {:>8} {:>8} {:>8}", "case", "ok", "mse", "mg", "wd");
    for s in &summary {
        println!(
            "{:<15} {:>4} {:>8.4} {:>8.4} {:>8.4}",
            s.case.name(),
            s.runs,
            s.mse,
            s.mg,
            s.wd
        );
    }
    for run in &runs {
        if let Err(msg) = &run.outcome {
            eprintln!("{} seed {} failed: {msg}", run.case.name(), run.seed);
        }
    }
    Ok(())
}

fn gradcheck_cmd(seed: u64) -> Result<bool> {
    let reports = gradcheck::run_suite(seed)?;
    println!("{:<10} {:>7} {:>12} {:>12}", "loss", "entries", "max rel", "max abs");
    let mut ok = true;
    for r in &reports {
        let pass = r.max_rel_error < GRADCHECK_TOLERANCE;
        ok &= pass;
        println!(
            "{:<10} {:>7} {:>12.3e} {:>12.3e}  {}",
            r.case,
            r.entries,
            r.max_rel_error,
            r.max_abs_error,
            if pass { "ok" } else { "FAIL" }
        );
    }
    Ok(ok)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Generate {
            config,
            seed,
            out_nodes,
            out_edges,
        } => generate(config.as_deref(), seed, &out_nodes, &out_edges)?,
        Command::Train {
            nodes,
            edges,
            config,
            seed,
            ablation,
            out,
        } => train(&nodes, &edges, config.as_deref(), seed, ablation, &out)?,
        Command::Evaluate {
            checkpoint,
            nodes,
            edges,
            out,
        } => evaluate(&checkpoint, &nodes, &edges, out.as_deref())?,
        Command::Ablate {
            nodes,
            edges,
            config,
            out,
            seeds,
            jobs,
        } => ablate(&nodes, &edges, config.as_deref(), &out, seeds, jobs)?,
        Command::Gradcheck { seed } => {
            if !gradcheck_cmd(seed)? {
                return Ok(ExitCode::from(3));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

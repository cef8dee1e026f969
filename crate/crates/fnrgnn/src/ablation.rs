//! Parallel ablation grid and its CSV outputs.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use rayon::prelude::*;

use fnrgnn_core::trainer::{self, AblationRun, CaseSummary, TrainConfig};
use fnrgnn_core::Graph;

use crate::error::{Error, Result};

/// `count` consecutive seeds starting at `base.seed`.
pub fn default_seeds(base: &TrainConfig, count: usize) -> Vec<u64> {
    (0..count as u64).map(|k| base.seed + k).collect()
}

/// Runs every case × seed on a pool of `jobs` threads. Results come back in
/// grid order regardless of scheduling.
pub fn run_ablation(g: &Graph, base: &TrainConfig, seeds: &[u64], jobs: usize) -> Result<Vec<AblationRun>> {
    base.validate()?;
    let grid = trainer::ablation_jobs(base, seeds);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| fnrgnn_core::Error::InvalidConfig(e.to_string()))?;
    Ok(pool.install(|| grid.par_iter().map(|job| trainer::run_ablation_job(g, job)).collect()))
}

fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

/// `case,seed,status,mse,mae,mg,vg,wd,error`, one row per run.
pub fn write_runs(path: &Path, runs: &[AblationRun]) -> Result<()> {
    let mut w = writer(path)?;
    let csv_err = |e: csv::Error| Error::format(path, e.to_string());
    w.write_record(["case", "seed", "status", "mse", "mae", "mg", "vg", "wd", "error"])
        .map_err(csv_err)?;
    for run in runs {
        let mut row = vec![run.case.name().to_string(), run.seed.to_string()];
        match &run.outcome {
            Ok(r) => {
                row.push("ok".into());
                row.extend([r.mse, r.mae, r.mg, r.vg, r.wd].map(|v| v.to_string()));
                row.push(String::new());
            }
            Err(msg) => {
                row.push("failed".into());
                row.extend(std::iter::repeat_n(String::new(), 5));
                row.push(msg.clone());
            }
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `case,runs,failures,mse,mae,mg,vg,wd` with seed-averaged metrics.
pub fn write_summary(path: &Path, summary: &[CaseSummary]) -> Result<()> {
    let mut w = writer(path)?;
    let csv_err = |e: csv::Error| Error::format(path, e.to_string());
    w.write_record(["case", "runs", "failures", "mse", "mae", "mg", "vg", "wd"])
        .map_err(csv_err)?;
    for s in summary {
        let mut row = vec![s.case.name().to_string(), s.runs.to_string(), s.failures.to_string()];
        row.extend([s.mse, s.mae, s.mg, s.vg, s.wd].map(|v| v.to_string()));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

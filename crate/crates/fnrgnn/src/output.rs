//! Result, metrics and loss-curve files written by a training run.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};

use fnrgnn_core::graph::AdjacencySpec;
use fnrgnn_core::trainer::{LossCurves, SplitReports, TrainConfig, TrainResult};

use crate::error::{Error, Result};

/// Deterministic metrics document: identical inputs give identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsDocument {
    pub metrics: SplitReports,
}

/// Full run summary, including the wall-clock time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultDocument {
    pub config: TrainConfig,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub adjacency: AdjacencySpec,
    pub sinkhorn_epsilon: f64,
    pub max_marginal_violation: f64,
    pub wall_clock_secs: f64,
    pub metrics: SplitReports,
}

impl ResultDocument {
    pub fn new(config: &TrainConfig, r: &TrainResult) -> Self {
        ResultDocument {
            config: config.clone(),
            best_epoch: r.best_epoch,
            epochs_run: r.epochs_run,
            adjacency: r.adjacency_spec,
            sinkhorn_epsilon: r.sinkhorn_epsilon,
            max_marginal_violation: r.max_marginal_violation,
            wall_clock_secs: r.wall_clock_secs,
            metrics: r.reports.clone(),
        }
    }
}

/// `epoch,total,mse,mmd,dist,val_mse`, one row per epoch starting at 1.
pub fn write_curves(path: &Path, curves: &LossCurves) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let csv_err = |e: csv::Error| Error::format(path, e.to_string());
    w.write_record(["epoch", "total", "mse", "mmd", "dist", "val_mse"])
        .map_err(csv_err)?;
    for e in 0..curves.len() {
        w.write_record([
            (e + 1).to_string(),
            curves.total[e].to_string(),
            curves.mse[e].to_string(),
            curves.mmd[e].to_string(),
            curves.dist[e].to_string(),
            curves.val_mse[e].to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

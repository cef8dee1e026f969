//! Training loop, node splits, evaluation and ablation cases.
//!
//! One epoch is a full-graph forward pass on the (re)weighted adjacency,
//! the training MSE, the MMD between the two groups' second-layer
//! embeddings and the distribution loss between their predictions, all
//! combined as
//!
//! ```text
//! total = mse + lambda_mmd * mmd + lambda_dist * dist
//! ```
//!
//! followed by one Adam step. Fairness terms use up to `sample_per_group`
//! training nodes per group, resampled every epoch. Validation MSE drives
//! early stopping and the best parameters are restored at the end.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adam::{AdamConfig, AdamState};
use crate::error::{Error, Result};
use crate::fairness::{self, Bandwidth, GroupIndex, SinkhornConfig};
use crate::graph::{build_adjacency, AdjacencySpec, Graph, ReweightConfig, ReweightedAdjacency, Standardizer};
use crate::math;
use crate::metrics::{mse_mae, MetricsReport};
use crate::model::{self, ModelConfig, ModelParams};
use crate::tape::Tape;
use crate::tensor::Tensor;

const STREAM_INIT: u64 = 0;
const STREAM_SPLIT: u64 = 1;
const STREAM_SAMPLE: u64 = 2;

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Which components of the full model are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    /// Plain GCN trained on MSE only.
    Vanilla,
    /// Fairness losses on the unweighted adjacency.
    NoReweight,
    /// Reweighting and distribution loss, no embedding alignment.
    NoMmd,
    /// Distribution loss reduced to the group mean gap.
    MeanOnlyDist,
    Full,
}

impl Ablation {
    pub const ALL: [Ablation; 5] = [
        Ablation::Vanilla,
        Ablation::NoReweight,
        Ablation::NoMmd,
        Ablation::MeanOnlyDist,
        Ablation::Full,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::Vanilla => "vanilla",
            Ablation::NoReweight => "no_reweight",
            Ablation::NoMmd => "no_mmd",
            Ablation::MeanOnlyDist => "mean_only_dist",
            Ablation::Full => "full",
        }
    }
}

impl core::str::FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown ablation case `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistKind {
    /// Sinkhorn divergence plus moment matching.
    SinkhornMoment,
    MeanOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lambda_mmd: f64,
    pub lambda_dist: f64,
    pub gamma: f64,
    pub weight_floor: f64,
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub patience: usize,
    pub seed: u64,
    pub split_fractions: [f64; 3],
    pub ablation: Ablation,
    pub hidden: usize,
    pub sample_per_group: usize,
    pub mmd_bandwidth: Bandwidth,
    /// Sinkhorn epsilon as a multiple of the training-target variance.
    pub sinkhorn_eps_scale: f64,
    pub sinkhorn_iterations: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda_mmd: 0.5,
            lambda_dist: 0.5,
            gamma: 1.0,
            weight_floor: 1e-3,
            epochs: 500,
            lr: 1e-3,
            weight_decay: 1e-5,
            patience: 50,
            seed: 0,
            split_fractions: [0.6, 0.2, 0.2],
            ablation: Ablation::Full,
            hidden: 64,
            sample_per_group: 500,
            mmd_bandwidth: Bandwidth::Median,
            sinkhorn_eps_scale: 0.05,
            sinkhorn_iterations: 50,
        }
    }
}

/// Settings after the ablation case has been applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveConfig {
    pub adjacency: AdjacencySpec,
    pub lambda_mmd: f64,
    pub lambda_dist: f64,
    pub dist: DistKind,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        for (name, v) in [
            ("lambda_mmd", self.lambda_mmd),
            ("lambda_dist", self.lambda_dist),
            ("gamma", self.gamma),
            ("weight_decay", self.weight_decay),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be a finite value >= 0, got {v}"));
            }
        }
        ReweightConfig {
            gamma: self.gamma,
            weight_floor: self.weight_floor,
        }
        .validate()?;
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be > 0, got {}", self.lr));
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if self.patience > self.epochs {
            return bad(format!(
                "patience ({}) must not exceed epochs ({})",
                self.patience, self.epochs
            ));
        }
        if self.split_fractions.iter().any(|f| !(*f > 0.0 && *f < 1.0)) {
            return bad(format!(
                "split fractions must each be in (0, 1), got {:?}",
                self.split_fractions
            ));
        }
        let sum: f64 = self.split_fractions.iter().sum();
        if math::abs(sum - 1.0) > 1e-9 {
            return bad(format!("split fractions must sum to 1, got {sum}"));
        }
        if self.hidden == 0 {
            return bad("hidden must be >= 1".into());
        }
        if self.sample_per_group == 0 {
            return bad("sample_per_group must be >= 1".into());
        }
        if let Bandwidth::Fixed(s) = self.mmd_bandwidth {
            if !(s > 0.0) {
                return bad(format!("fixed MMD bandwidth must be > 0, got {s}"));
            }
        }
        if !(self.sinkhorn_eps_scale > 0.0 && self.sinkhorn_eps_scale.is_finite()) {
            return bad(format!(
                "sinkhorn_eps_scale must be > 0, got {}",
                self.sinkhorn_eps_scale
            ));
        }
        if self.sinkhorn_iterations == 0 {
            return bad("sinkhorn_iterations must be >= 1".into());
        }
        Ok(())
    }

    pub fn effective(&self) -> EffectiveConfig {
        let reweighted = AdjacencySpec::Reweighted(ReweightConfig {
            gamma: self.gamma,
            weight_floor: self.weight_floor,
        });
        let (adjacency, lambda_mmd, lambda_dist, dist) = match self.ablation {
            Ablation::Vanilla => (AdjacencySpec::Plain, 0.0, 0.0, DistKind::SinkhornMoment),
            Ablation::NoReweight => (
                AdjacencySpec::Plain,
                self.lambda_mmd,
                self.lambda_dist,
                DistKind::SinkhornMoment,
            ),
            Ablation::NoMmd => (reweighted, 0.0, self.lambda_dist, DistKind::SinkhornMoment),
            Ablation::MeanOnlyDist => (reweighted, self.lambda_mmd, self.lambda_dist, DistKind::MeanOnly),
            Ablation::Full => (
                reweighted,
                self.lambda_mmd,
                self.lambda_dist,
                DistKind::SinkhornMoment,
            ),
        };
        EffectiveConfig {
            adjacency,
            lambda_mmd,
            lambda_dist,
            dist,
        }
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            ..AdamConfig::default()
        }
    }
}

/// Disjoint train / validation / test node sets, each sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

fn round_count(fraction: f64, size: usize) -> usize {
    libm::round(fraction * size as f64) as usize
}

/// Random split stratified by sensitive group, so that every split holds
/// nodes of both groups.
pub fn split_nodes(g: &Graph, fractions: [f64; 3], seed: u64) -> Result<Splits> {
    let n = g.num_nodes();
    if n < 10 {
        return Err(Error::Split(format!("need at least 10 nodes, got {n}")));
    }
    let mut rng = rng_for(seed, STREAM_SPLIT);
    let mut splits = Splits {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for group in [0u8, 1] {
        let mut nodes: Vec<usize> = (0..n).filter(|&i| g.sensitive()[i] == group).collect();
        let size = nodes.len();
        nodes.shuffle(&mut rng);
        let n_train = round_count(fractions[0], size).min(size);
        let n_val = round_count(fractions[1], size).min(size - n_train);
        let n_test = size - n_train - n_val;
        if n_train == 0 || n_val == 0 || n_test == 0 {
            return Err(Error::Split(format!(
                "group {group} has {size} nodes, giving {n_train}/{n_val}/{n_test} \
                 train/val/test; use smaller validation/test fractions or more nodes"
            )));
        }
        splits.train.extend_from_slice(&nodes[..n_train]);
        splits.val.extend_from_slice(&nodes[n_train..n_train + n_val]);
        splits.test.extend_from_slice(&nodes[n_train + n_val..]);
    }
    splits.train.sort_unstable();
    splits.val.sort_unstable();
    splits.test.sort_unstable();
    Ok(splits)
}

/// Inputs derived from the graph before training: splits, standardized
/// features and the normalized adjacency.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub splits: Splits,
    pub standardizer: Standardizer,
    pub adjacency_spec: AdjacencySpec,
    pub features: Tensor,
    pub adjacency: ReweightedAdjacency,
}

impl Prepared {
    /// Rebuilds from stored pieces, e.g. when evaluating a checkpoint.
    pub fn from_parts(
        g: &Graph,
        splits: Splits,
        standardizer: Standardizer,
        adjacency_spec: AdjacencySpec,
    ) -> Result<Self> {
        let n = g.num_nodes();
        for &i in splits.train.iter().chain(&splits.val).chain(&splits.test) {
            if i >= n {
                return Err(Error::IndexOutOfBounds { index: i, len: n });
            }
        }
        let features = standardizer.apply(g.features())?;
        // similarities are taken on the standardized features
        let adjacency = build_adjacency(&g.with_features(features.clone())?, &adjacency_spec)?;
        Ok(Prepared {
            splits,
            standardizer,
            adjacency_spec,
            features,
            adjacency,
        })
    }

    pub fn new(g: &Graph, cfg: &TrainConfig) -> Result<Self> {
        let splits = split_nodes(g, cfg.split_fractions, cfg.seed)?;
        let standardizer = Standardizer::fit(g.features(), &splits.train)?;
        Prepared::from_parts(g, splits, standardizer, cfg.effective().adjacency)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitReports {
    pub train: MetricsReport,
    pub val: MetricsReport,
    pub test: MetricsReport,
}

pub fn evaluate(g: &Graph, prepared: &Prepared, params: &ModelParams) -> Result<SplitReports> {
    let pred = model::predict(&prepared.features, prepared.adjacency.matrix(), params)?;
    let y = g.targets();
    let s = g.sensitive();
    Ok(SplitReports {
        train: MetricsReport::compute("train", &pred, y, s, &prepared.splits.train)?,
        val: MetricsReport::compute("val", &pred, y, s, &prepared.splits.val)?,
        test: MetricsReport::compute("test", &pred, y, s, &prepared.splits.test)?,
    })
}

/// Per-epoch loss components. `total[e] == mse[e] + lambda_mmd * mmd[e] +
/// lambda_dist * dist[e]`, evaluated in that order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossCurves {
    pub total: Vec<f64>,
    pub mse: Vec<f64>,
    pub mmd: Vec<f64>,
    pub dist: Vec<f64>,
    pub val_mse: Vec<f64>,
}

impl LossCurves {
    pub fn len(&self) -> usize {
        self.total.len()
    }

    pub fn is_empty(&self) -> bool {
        self.total.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainResult {
    pub params: ModelParams,
    pub curves: LossCurves,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub reports: SplitReports,
    pub splits: Splits,
    pub standardizer: Standardizer,
    pub adjacency_spec: AdjacencySpec,
    pub sinkhorn_epsilon: f64,
    /// Largest Sinkhorn row-marginal violation seen during training.
    pub max_marginal_violation: f64,
    /// Filled in by callers that have a clock.
    pub wall_clock_secs: f64,
}

/// Trains from seeded Glorot initialization.
pub fn train(g: &Graph, cfg: &TrainConfig) -> Result<TrainResult> {
    cfg.validate()?;
    let prepared = Prepared::new(g, cfg)?;
    let mut rng = rng_for(cfg.seed, STREAM_INIT);
    let params = ModelParams::init(g.feature_dim(), &ModelConfig { hidden: cfg.hidden }, &mut rng)?;
    train_prepared(g, &prepared, cfg, params)
}

/// Trains from the given initial parameters.
pub fn train_prepared(
    g: &Graph,
    prepared: &Prepared,
    cfg: &TrainConfig,
    init: ModelParams,
) -> Result<TrainResult> {
    cfg.validate()?;
    if init.feature_dim() != prepared.features.cols() {
        return Err(Error::shape(
            "train",
            prepared.features.shape(),
            (init.feature_dim(), init.hidden()),
        ));
    }
    let eff = cfg.effective();
    let targets = g.targets();
    let train_nodes = &prepared.splits.train;
    let groups = GroupIndex::from_nodes(train_nodes, g.sensitive());
    groups.ensure_non_empty()?;

    let train_y: Vec<f64> = train_nodes.iter().map(|&i| targets[i]).collect();
    let target_var = math::variance(&train_y);
    let sinkhorn = SinkhornConfig {
        epsilon: cfg.sinkhorn_eps_scale * if target_var > 0.0 { target_var } else { 1.0 },
        iterations: cfg.sinkhorn_iterations,
        anneal: false,
    };

    let mut rng = rng_for(cfg.seed, STREAM_SAMPLE);
    let mut params = init;
    let mut adam = AdamState::new(cfg.adam(), &params.shapes());
    let adjacency = prepared.adjacency.matrix();
    let mut curves = LossCurves::default();
    let mut best = (f64::INFINITY, 0usize, params.clone());
    let mut max_violation: f64 = 0.0;

    for epoch in 1..=cfg.epochs {
        let mut tape = Tape::new();
        let x = tape.constant(prepared.features.clone());
        let vars = params.register(&mut tape);
        let out = model::forward(&mut tape, x, adjacency, &vars)?;
        let mse = model::mse_loss(&mut tape, out.yhat, targets, train_nodes)?;
        let mut total = mse;
        let (mut mmd_value, mut dist_value) = (0.0, 0.0);

        if eff.lambda_mmd > 0.0 || eff.lambda_dist > 0.0 {
            let (s0, s1) = fairness::sample_group_nodes(&groups, cfg.sample_per_group, &mut rng)?;
            if eff.lambda_mmd > 0.0 {
                let h0 = tape.gather_rows(out.hidden, &s0)?;
                let h1 = tape.gather_rows(out.hidden, &s1)?;
                let mmd = fairness::mmd_rbf(&mut tape, h0, h1, cfg.mmd_bandwidth)?;
                mmd_value = tape.scalar(mmd).expect("scalar");
                let weighted = tape.scale(mmd, eff.lambda_mmd);
                total = tape.add(total, weighted)?;
            }
            if eff.lambda_dist > 0.0 {
                let a = tape.gather_rows(out.yhat, &s0)?;
                let b = tape.gather_rows(out.yhat, &s1)?;
                let dist = match eff.dist {
                    DistKind::SinkhornMoment => {
                        let (d, violation) = fairness::dist_loss(&mut tape, a, b, &sinkhorn)?;
                        max_violation = max_violation.max(violation);
                        d
                    }
                    DistKind::MeanOnly => fairness::mean_gap_loss(&mut tape, a, b)?,
                };
                dist_value = tape.scalar(dist).expect("scalar");
                let weighted = tape.scale(dist, eff.lambda_dist);
                total = tape.add(total, weighted)?;
            }
        }

        let mse_value = tape.scalar(mse).expect("scalar");
        let total_value = tape.scalar(total).expect("scalar");
        if !total_value.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                mse: mse_value,
                mmd: mmd_value,
                dist: dist_value,
            });
        }
        let (val_mse, _) = mse_mae(tape.value(out.yhat).data(), targets, &prepared.splits.val)?;
        curves.total.push(total_value);
        curves.mse.push(mse_value);
        curves.mmd.push(mmd_value);
        curves.dist.push(dist_value);
        curves.val_mse.push(val_mse);

        if val_mse < best.0 {
            best = (val_mse, epoch, params.clone());
        } else if epoch - best.1 >= cfg.patience {
            break;
        }
        if epoch == cfg.epochs {
            break;
        }

        let grads = tape.backward(total)?;
        let grads = params.collect_grads(&vars, &grads);
        adam.step(&mut params.slots(&grads))?;
    }

    let (_, best_epoch, best_params) = best;
    let reports = evaluate(g, prepared, &best_params)?;
    Ok(TrainResult {
        params: best_params,
        epochs_run: curves.len(),
        curves,
        best_epoch,
        reports,
        splits: prepared.splits.clone(),
        standardizer: prepared.standardizer.clone(),
        adjacency_spec: prepared.adjacency_spec,
        sinkhorn_epsilon: sinkhorn.epsilon,
        max_marginal_violation: max_violation,
        wall_clock_secs: 0.0,
    })
}

/// One configured run of the ablation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationJob {
    pub case: Ablation,
    pub seed: u64,
    pub config: TrainConfig,
}

/// Every case in [`Ablation::ALL`] crossed with `seeds`.
pub fn ablation_jobs(base: &TrainConfig, seeds: &[u64]) -> Vec<AblationJob> {
    let mut jobs = Vec::with_capacity(Ablation::ALL.len() * seeds.len());
    for case in Ablation::ALL {
        for &seed in seeds {
            jobs.push(AblationJob {
                case,
                seed,
                config: TrainConfig {
                    ablation: case,
                    seed,
                    ..base.clone()
                },
            });
        }
    }
    jobs
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRun {
    pub case: Ablation,
    pub seed: u64,
    /// Test-split metrics, or the error message of a failed run.
    pub outcome: core::result::Result<MetricsReport, String>,
}

/// Runs the ablation grid sequentially. Failed runs are recorded, not fatal.
pub fn run_ablation_suite(g: &Graph, base: &TrainConfig, seeds: &[u64]) -> Vec<AblationRun> {
    ablation_jobs(base, seeds)
        .into_iter()
        .map(|job| run_ablation_job(g, &job))
        .collect()
}

pub fn run_ablation_job(g: &Graph, job: &AblationJob) -> AblationRun {
    AblationRun {
        case: job.case,
        seed: job.seed,
        outcome: train(g, &job.config)
            .map(|r| r.reports.test)
            .map_err(|e| e.to_string()),
    }
}

/// Seed-averaged test metrics for one ablation case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseSummary {
    pub case: Ablation,
    pub runs: usize,
    pub failures: usize,
    pub mse: f64,
    pub mae: f64,
    pub mg: f64,
    pub vg: f64,
    pub wd: f64,
}

pub fn summarize(runs: &[AblationRun]) -> Vec<CaseSummary> {
    Ablation::ALL
        .into_iter()
        .filter(|case| runs.iter().any(|r| r.case == *case))
        .map(|case| {
            let ok: Vec<&MetricsReport> = runs
                .iter()
                .filter(|r| r.case == case)
                .filter_map(|r| r.outcome.as_ref().ok())
                .collect();
            let failures = runs
                .iter()
                .filter(|r| r.case == case && r.outcome.is_err())
                .count();
            let avg = |f: fn(&MetricsReport) -> f64| {
                if ok.is_empty() {
                    f64::NAN
                } else {
                    ok.iter().map(|r| f(r)).sum::<f64>() / ok.len() as f64
                }
            };
            CaseSummary {
                case,
                runs: ok.len(),
                failures,
                mse: avg(|r| r.mse),
                mae: avg(|r| r.mae),
                mg: avg(|r| r.mg),
                vg: avg(|r| r.vg),
                wd: avg(|r| r.wd),
            }
        })
        .collect()
}

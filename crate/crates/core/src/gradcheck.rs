//! Finite-difference checks of the tape gradients for the full model.
//!
//! Each case builds a scalar loss from the model parameters on a small
//! random graph, differentiates it on the tape and compares every parameter
//! entry against a central difference.

use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fairness::{self, Bandwidth, SinkhornConfig};
use crate::graph::{build_reweighted_adjacency, Graph, ReweightConfig, ReweightedAdjacency};
use crate::math;
use crate::model::{self, ModelConfig, ModelParams, ParamVars, PARAM_NAMES};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Relative errors are measured against at least this magnitude, so that
/// entries whose true gradient is zero compare in absolute terms.
pub const GRAD_FLOOR: f64 = 1e-4;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    math::abs(analytic - numeric) / math::abs(analytic).max(math::abs(numeric)).max(GRAD_FLOOR)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub case: String,
    pub entries: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// Parameter holding the worst entry.
    pub worst_param: String,
}

/// Compares tape gradients of `loss` with central differences of step `h`
/// over every entry of `params`.
pub fn check_params<F>(case: &str, params: &ModelParams, h: f64, loss: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &ParamVars) -> Result<Var>,
{
    let eval = |p: &ModelParams| -> Result<f64> {
        let mut tape = Tape::new();
        let vars = p.register(&mut tape);
        let l = loss(&mut tape, &vars)?;
        tape.scalar(l).ok_or_else(|| {
            let (rows, cols) = tape.shape(l);
            Error::NonScalarLoss { rows, cols }
        })
    };

    let mut tape = Tape::new();
    let vars = params.register(&mut tape);
    let l = loss(&mut tape, &vars)?;
    let grads = tape.backward(l)?;
    let analytic = params.collect_grads(&vars, &grads);

    let mut report = GradCheckReport {
        case: case.into(),
        entries: 0,
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        worst_param: String::new(),
    };
    let mut probe = params.clone();
    for (k, grad) in analytic.iter().enumerate() {
        for idx in 0..grad.data().len() {
            let original = params.tensors()[k].data()[idx];
            probe.tensors_mut()[k].data_mut()[idx] = original + h;
            let up = eval(&probe)?;
            probe.tensors_mut()[k].data_mut()[idx] = original - h;
            let down = eval(&probe)?;
            probe.tensors_mut()[k].data_mut()[idx] = original;

            let numeric = (up - down) / (2.0 * h);
            let a = grad.data()[idx];
            let rel = relative_error(a, numeric);
            if !(rel <= report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst_param = PARAM_NAMES[k].into();
            }
            report.max_abs_error = report.max_abs_error.max(math::abs(a - numeric));
            report.entries += 1;
        }
    }
    Ok(report)
}

/// Small random graph with both groups present.
pub fn random_graph(n: usize, d: usize, edge_prob: f64, seed: u64) -> Result<Graph> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let features: Vec<f64> = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(edge_prob) {
                edges.push((i, j));
            }
        }
    }
    let sensitive: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
    let targets: Vec<f64> = (0..n)
        .map(|i| sensitive[i] as f64 + rng.random_range(-0.5..0.5))
        .collect();
    Graph::new(Tensor::from_vec(n, d, features)?, edges, sensitive, targets)
}

/// Fixed fixture shared by the suite cases.
struct Fixture {
    graph: Graph,
    adjacency: ReweightedAdjacency,
    params: ModelParams,
    train: Vec<usize>,
    g0: Vec<usize>,
    g1: Vec<usize>,
}

impl Fixture {
    fn new(seed: u64) -> Result<Self> {
        let graph = random_graph(20, 5, 0.2, seed)?;
        let adjacency = build_reweighted_adjacency(&graph, &ReweightConfig::default())?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
        let mut params = ModelParams::init(5, &ModelConfig { hidden: 6 }, &mut rng)?;
        // non-zero biases so that the bias paths are exercised
        for t in [&mut params.b1, &mut params.b2, &mut params.head_b] {
            for v in t.data_mut() {
                *v = rng.random_range(-0.1..0.1);
            }
        }
        let train: Vec<usize> = (0..14).collect();
        let g0 = train.iter().copied().filter(|&i| graph.sensitive()[i] == 0).collect();
        let g1 = train.iter().copied().filter(|&i| graph.sensitive()[i] == 1).collect();
        Ok(Fixture {
            graph,
            adjacency,
            params,
            train,
            g0,
            g1,
        })
    }

    fn forward(&self, tape: &mut Tape, vars: &ParamVars) -> Result<model::ForwardOutput> {
        let x = tape.constant(self.graph.features().clone());
        model::forward(tape, x, self.adjacency.matrix(), vars)
    }

    fn embedding_bandwidth(&self) -> Result<f64> {
        let mut tape = Tape::new();
        let vars = self.params.register(&mut tape);
        let out = self.forward(&mut tape, &vars)?;
        let h = tape.value(out.hidden);
        Ok(fairness::median_bandwidth(&h.gather_rows(&self.g0)?, &h.gather_rows(&self.g1)?))
    }
}

/// Gradient checks of the MSE, MMD, Sinkhorn divergence, moment and
/// combined losses through both GCN layers and the head.
pub fn run_suite(seed: u64) -> Result<Vec<GradCheckReport>> {
    let fx = Fixture::new(seed)?;
    let h = 1e-5;
    let sigma = Bandwidth::Fixed(fx.embedding_bandwidth()?);
    let sinkhorn = SinkhornConfig {
        epsilon: 0.05,
        iterations: 50,
        anneal: false,
    };
    let targets = fx.graph.targets();

    let mut out = Vec::new();
    out.push(check_params("mse", &fx.params, h, |tape, vars| {
        let o = fx.forward(tape, vars)?;
        model::mse_loss(tape, o.yhat, targets, &fx.train)
    })?);
    out.push(check_params("mmd", &fx.params, h, |tape, vars| {
        let o = fx.forward(tape, vars)?;
        let a = tape.gather_rows(o.hidden, &fx.g0)?;
        let b = tape.gather_rows(o.hidden, &fx.g1)?;
        fairness::mmd_rbf(tape, a, b, sigma)
    })?);
    out.push(check_params("sinkhorn", &fx.params, h, |tape, vars| {
        let o = fx.forward(tape, vars)?;
        let a = tape.gather_rows(o.yhat, &fx.g0)?;
        let b = tape.gather_rows(o.yhat, &fx.g1)?;
        Ok(fairness::sinkhorn_divergence(tape, a, b, &sinkhorn)?.0)
    })?);
    out.push(check_params("moment", &fx.params, h, |tape, vars| {
        let o = fx.forward(tape, vars)?;
        let a = tape.gather_rows(o.yhat, &fx.g0)?;
        let b = tape.gather_rows(o.yhat, &fx.g1)?;
        fairness::moment_loss(tape, a, b)
    })?);
    out.push(check_params("total", &fx.params, h, |tape, vars| {
        let o = fx.forward(tape, vars)?;
        let mse = model::mse_loss(tape, o.yhat, targets, &fx.train)?;
        let ha = tape.gather_rows(o.hidden, &fx.g0)?;
        let hb = tape.gather_rows(o.hidden, &fx.g1)?;
        let mmd = fairness::mmd_rbf(tape, ha, hb, sigma)?;
        let a = tape.gather_rows(o.yhat, &fx.g0)?;
        let b = tape.gather_rows(o.yhat, &fx.g1)?;
        let (dist, _) = fairness::dist_loss(tape, a, b, &sinkhorn)?;
        let mmd = tape.scale(mmd, 0.5);
        let dist = tape.scale(dist, 0.5);
        let t = tape.add(mse, mmd)?;
        tape.add(t, dist)
    })?);
    Ok(out)
}

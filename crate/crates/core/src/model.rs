//! Two-layer GCN encoder with a linear regression head.
//!
//! ```text
//! H1   = relu(A X W1 + b1)
//! H2   = relu(A H1 W2 + b2)
//! yhat = H2 w_head + b_head
//! ```

use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::adam::ParamSlot;
use crate::error::{Error, Result};
use crate::math;
use crate::sparse::CsrMatrix;
use crate::tape::{Gradients, Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { hidden: 64 }
    }
}

/// Names of the parameter tensors, in storage order.
pub const PARAM_NAMES: [&str; 6] = ["w1", "b1", "w2", "b2", "head_w", "head_b"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
    pub head_w: Tensor,
    pub head_b: Tensor,
}

/// Parameter handles on a tape.
#[derive(Debug, Clone, Copy)]
pub struct ParamVars {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
    pub head_w: Var,
    pub head_b: Var,
}

fn glorot(rows: usize, cols: usize, rng: &mut impl Rng) -> Tensor {
    let bound = math::sqrt(6.0 / (rows + cols) as f64);
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-bound..=bound))
        .collect();
    Tensor::from_vec(rows, cols, data).expect("length matches shape")
}

impl ModelParams {
    /// Glorot-uniform weights and zero biases.
    pub fn init(feature_dim: usize, cfg: &ModelConfig, rng: &mut impl Rng) -> Result<Self> {
        if feature_dim == 0 || cfg.hidden == 0 {
            return Err(Error::InvalidConfig(alloc::format!(
                "feature dim and hidden width must be >= 1, got {feature_dim} and {}",
                cfg.hidden
            )));
        }
        let h = cfg.hidden;
        Ok(ModelParams {
            w1: glorot(feature_dim, h, rng),
            b1: Tensor::zeros(1, h),
            w2: glorot(h, h, rng),
            b2: Tensor::zeros(1, h),
            head_w: glorot(h, 1, rng),
            head_b: Tensor::zeros(1, 1),
        })
    }

    /// All-zero parameters of the given sizes.
    pub fn zeros(feature_dim: usize, hidden: usize) -> Self {
        ModelParams {
            w1: Tensor::zeros(feature_dim, hidden),
            b1: Tensor::zeros(1, hidden),
            w2: Tensor::zeros(hidden, hidden),
            b2: Tensor::zeros(1, hidden),
            head_w: Tensor::zeros(hidden, 1),
            head_b: Tensor::zeros(1, 1),
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn hidden(&self) -> usize {
        self.w1.cols()
    }

    pub fn tensors(&self) -> [&Tensor; 6] {
        [&self.w1, &self.b1, &self.w2, &self.b2, &self.head_w, &self.head_b]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 6] {
        [
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.head_w,
            &mut self.head_b,
        ]
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.tensors().iter().map(|t| t.shape()).collect()
    }

    /// Rebuilds from named tensors in [`PARAM_NAMES`] order, checking that
    /// the shapes form a consistent model.
    pub fn from_tensors(tensors: [Tensor; 6]) -> Result<Self> {
        let [w1, b1, w2, b2, head_w, head_b] = tensors;
        let (d, h) = w1.shape();
        let expected = [(d, h), (1, h), (h, h), (1, h), (h, 1), (1, 1)];
        for (t, (name, want)) in [&w1, &b1, &w2, &b2, &head_w, &head_b]
            .iter()
            .zip(PARAM_NAMES.iter().zip(expected))
        {
            if t.shape() != want {
                return Err(Error::shape(name, want, t.shape()));
            }
            if !t.is_finite() {
                return Err(Error::NonFinite(name));
            }
        }
        Ok(ModelParams {
            w1,
            b1,
            w2,
            b2,
            head_w,
            head_b,
        })
    }

    pub fn register(&self, tape: &mut Tape) -> ParamVars {
        ParamVars {
            w1: tape.param(self.w1.clone()),
            b1: tape.param(self.b1.clone()),
            w2: tape.param(self.w2.clone()),
            b2: tape.param(self.b2.clone()),
            head_w: tape.param(self.head_w.clone()),
            head_b: tape.param(self.head_b.clone()),
        }
    }

    /// Gradient tensors in [`PARAM_NAMES`] order; zeros where the loss does
    /// not reach a parameter.
    pub fn collect_grads(&self, vars: &ParamVars, grads: &Gradients) -> [Tensor; 6] {
        [
            grads.get_or_zeros(vars.w1, self.w1.shape()),
            grads.get_or_zeros(vars.b1, self.b1.shape()),
            grads.get_or_zeros(vars.w2, self.w2.shape()),
            grads.get_or_zeros(vars.b2, self.b2.shape()),
            grads.get_or_zeros(vars.head_w, self.head_w.shape()),
            grads.get_or_zeros(vars.head_b, self.head_b.shape()),
        ]
    }

    /// Optimizer slots; weights decay, biases do not.
    pub fn slots<'a>(&'a mut self, grads: &'a [Tensor; 6]) -> [ParamSlot<'a>; 6] {
        let [w1, b1, w2, b2, head_w, head_b] = self.tensors_mut();
        let mut g = grads.iter();
        let mut next = |name, value, decay| ParamSlot {
            name,
            value,
            grad: g.next().expect("six gradients"),
            decay,
        };
        [
            next("w1", w1, true),
            next("b1", b1, false),
            next("w2", w2, true),
            next("b2", b2, false),
            next("head_w", head_w, true),
            next("head_b", head_b, false),
        ]
    }
}

/// Outputs of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct ForwardOutput {
    pub hidden1: Var,
    /// Second-layer embeddings, `n x hidden`.
    pub hidden: Var,
    /// Predictions, `n x 1`.
    pub yhat: Var,
}

pub fn forward(
    tape: &mut Tape,
    features: Var,
    adjacency: &Arc<CsrMatrix>,
    params: &ParamVars,
) -> Result<ForwardOutput> {
    let (n, _) = tape.shape(features);
    if adjacency.n() != n {
        return Err(Error::shape("forward", (adjacency.n(), adjacency.n()), tape.shape(features)));
    }
    let ax = tape.sparse_matmul(adjacency, features)?;
    let z1 = tape.matmul(ax, params.w1)?;
    let z1 = tape.add_bias(z1, params.b1)?;
    let hidden1 = tape.relu(z1);

    let ah = tape.sparse_matmul(adjacency, hidden1)?;
    let z2 = tape.matmul(ah, params.w2)?;
    let z2 = tape.add_bias(z2, params.b2)?;
    let hidden = tape.relu(z2);

    let out = tape.matmul(hidden, params.head_w)?;
    let yhat = tape.add(out, params.head_b)?;
    Ok(ForwardOutput {
        hidden1,
        hidden,
        yhat,
    })
}

/// Predictions without recording gradients.
pub fn predict(features: &Tensor, adjacency: &Arc<CsrMatrix>, params: &ModelParams) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let x = tape.constant(features.clone());
    let vars = ParamVars {
        w1: tape.constant(params.w1.clone()),
        b1: tape.constant(params.b1.clone()),
        w2: tape.constant(params.w2.clone()),
        b2: tape.constant(params.b2.clone()),
        head_w: tape.constant(params.head_w.clone()),
        head_b: tape.constant(params.head_b.clone()),
    };
    let out = forward(&mut tape, x, adjacency, &vars)?;
    Ok(tape.value(out.yhat).data().to_vec())
}

/// Mean squared error of `yhat` against `targets` over the nodes in `mask`.
pub fn mse_loss(tape: &mut Tape, yhat: Var, targets: &[f64], mask: &[usize]) -> Result<Var> {
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    if tape.shape(yhat) != (targets.len(), 1) {
        return Err(Error::shape("mse_loss", tape.shape(yhat), (targets.len(), 1)));
    }
    let picked = tape.gather_rows(yhat, mask)?;
    let y: Vec<f64> = mask.iter().map(|&i| targets[i]).collect();
    let y = tape.constant(Tensor::column(y));
    let residual = tape.sub(picked, y)?;
    let sq = tape.square(residual);
    tape.mean(sq)
}

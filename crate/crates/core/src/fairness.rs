//! Fairness regularizers over two sensitive groups.
//!
//! - [`mmd_rbf`]: biased (V-statistic) squared MMD with a Gaussian kernel,
//!   applied to node embeddings.
//! - [`sinkhorn_divergence`]: debiased entropic OT between the two groups'
//!   scalar predictions, with every Sinkhorn iteration recorded on the tape.
//! - [`moment_loss`]: absolute gaps of group means and population variances.
//!
//! All losses are built from [`Tape`] primitives, so their gradients come
//! from the same backward pass as the regression loss.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Node indices of the two sensitive groups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupIndex {
    pub g0: Vec<usize>,
    pub g1: Vec<usize>,
}

impl GroupIndex {
    /// Splits `nodes` by their sensitive value.
    pub fn from_nodes(nodes: &[usize], sensitive: &[u8]) -> Self {
        let (g1, g0) = nodes.iter().partition(|&&i| sensitive[i] == 1);
        GroupIndex { g0, g1 }
    }

    pub fn ensure_non_empty(&self) -> Result<()> {
        if self.g0.is_empty() {
            return Err(Error::EmptyGroup(0));
        }
        if self.g1.is_empty() {
            return Err(Error::EmptyGroup(1));
        }
        Ok(())
    }
}

/// Uniform sample of up to `k` nodes from each group, without replacement.
/// A group with at most `k` nodes is returned whole, in its original order.
pub fn sample_group_nodes(
    groups: &GroupIndex,
    k: usize,
    rng: &mut impl Rng,
) -> Result<(Vec<usize>, Vec<usize>)> {
    groups.ensure_non_empty()?;
    let mut pick = |group: &[usize]| -> Vec<usize> {
        if group.len() <= k {
            group.to_vec()
        } else {
            let mut chosen = index::sample(rng, group.len(), k).into_vec();
            chosen.sort_unstable();
            chosen.into_iter().map(|i| group[i]).collect()
        }
    };
    let s0 = pick(&groups.g0);
    let s1 = pick(&groups.g1);
    Ok((s0, s1))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "sigma", rename_all = "snake_case")]
pub enum Bandwidth {
    /// Median pairwise Euclidean distance over the union of both sets,
    /// recomputed on every call and treated as a constant.
    Median,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MmdConfig {
    pub bandwidth: Bandwidth,
    pub sample_per_group: usize,
}

impl Default for MmdConfig {
    fn default() -> Self {
        MmdConfig {
            bandwidth: Bandwidth::Median,
            sample_per_group: 500,
        }
    }
}

/// Median of all pairwise Euclidean distances among the rows of `a` and `b`
/// together; `1.0` if that median is zero or there is a single row.
pub fn median_bandwidth(a: &Tensor, b: &Tensor) -> f64 {
    let rows: Vec<&[f64]> = (0..a.rows())
        .map(|i| a.row_slice(i))
        .chain((0..b.rows()).map(|j| b.row_slice(j)))
        .collect();
    let mut dists = Vec::with_capacity(rows.len() * rows.len().saturating_sub(1) / 2);
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            let d2: f64 = rows[i].iter().zip(rows[j]).map(|(x, y)| (x - y) * (x - y)).sum();
            dists.push(math::sqrt(d2));
        }
    }
    if dists.is_empty() {
        return 1.0;
    }
    let len = dists.len();
    let mid = len / 2;
    let (_, &mut upper, _) = dists.select_nth_unstable_by(mid, f64::total_cmp);
    let median = if len % 2 == 1 {
        upper
    } else {
        let lower = dists[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    };
    if median > 0.0 {
        median
    } else {
        1.0
    }
}

fn kernel_mean(tape: &mut Tape, a: Var, b: Var, neg_inv_two_sigma_sq: f64) -> Result<Var> {
    let d = tape.pairwise_sq_dist(a, b)?;
    let scaled = tape.scale(d, neg_inv_two_sigma_sq);
    let k = tape.exp(scaled);
    tape.mean(k)
}

/// Biased squared MMD between row sets `a` (m x h) and `b` (p x h):
/// `mean k(a,a) + mean k(b,b) - 2 mean k(a,b)` with
/// `k(x, y) = exp(-|x - y|^2 / (2 sigma^2))`.
///
/// The cross term is evaluated in both orders so the result is exactly
/// symmetric in its arguments.
pub fn mmd_rbf(tape: &mut Tape, a: Var, b: Var, bandwidth: Bandwidth) -> Result<Var> {
    let (m, h) = tape.shape(a);
    let (p, hb) = tape.shape(b);
    if h != hb || m == 0 || p == 0 {
        return Err(Error::shape("mmd_rbf", (m, h), (p, hb)));
    }
    if !tape.value(a).is_finite() || !tape.value(b).is_finite() {
        return Err(Error::NonFinite("mmd_rbf embeddings"));
    }
    let sigma = match bandwidth {
        Bandwidth::Median => median_bandwidth(tape.value(a), tape.value(b)),
        Bandwidth::Fixed(s) if s > 0.0 => s,
        Bandwidth::Fixed(s) => {
            return Err(Error::InvalidConfig(format!("MMD bandwidth must be > 0, got {s}")))
        }
    };
    let coef = -1.0 / (2.0 * sigma * sigma);
    let kaa = kernel_mean(tape, a, a, coef)?;
    let kbb = kernel_mean(tape, b, b, coef)?;
    let kab = kernel_mean(tape, a, b, coef)?;
    let kba = kernel_mean(tape, b, a, coef)?;
    let within = tape.add(kaa, kbb)?;
    let cross = tape.add(kab, kba)?;
    tape.sub(within, cross)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinkhornConfig {
    /// Entropic regularization strength, in squared prediction units.
    pub epsilon: f64,
    pub iterations: usize,
    /// Start from `eps` equal to the largest cost entry and shrink it
    /// geometrically to `epsilon` over the first half of the iterations.
    #[serde(default)]
    pub anneal: bool,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        SinkhornConfig {
            epsilon: 0.05,
            iterations: 50,
            anneal: false,
        }
    }
}

impl SinkhornConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "sinkhorn epsilon must be > 0, got {}",
                self.epsilon
            )));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("sinkhorn iterations must be >= 1".into()));
        }
        Ok(())
    }

    /// Per-iteration `eps` for a cost matrix. The annealing start depends on
    /// the cost values but is not differentiated.
    pub fn schedule(&self, cost: &Tensor) -> Vec<f64> {
        let eps = self.epsilon;
        let start = cost.data().iter().copied().fold(0.0, f64::max);
        if !self.anneal || start <= eps {
            return alloc::vec![eps; self.iterations];
        }
        let steps = (self.iterations / 2).max(1);
        let ratio = math::exp(math::ln(eps / start) / steps as f64);
        let mut e = start;
        (0..self.iterations)
            .map(|t| {
                e *= ratio;
                if t + 1 >= steps {
                    eps
                } else {
                    e.max(eps)
                }
            })
            .collect()
    }
}

/// Entropic OT value with the L1 violation of the row marginal left by the
/// last iteration (the column marginal is exact after the final update).
#[derive(Debug, Clone, Copy)]
pub struct TransportCost {
    pub value: Var,
    pub marginal_violation: f64,
}

/// Entropic optimal transport between uniform empirical measures on the
/// scalar columns `a` (m x 1) and `b` (p x 1) with squared cost.
///
/// Runs `iterations` log-domain Sinkhorn updates starting from zero
/// potentials, forms the plan `pi_ij = exp((f_i + g_j - C_ij) / eps) / (m p)`
/// and returns `<pi, C>`. With a single point on each side the only
/// admissible plan is used and the result is the raw cost.
pub fn entropic_ot(tape: &mut Tape, a: Var, b: Var, cfg: &SinkhornConfig) -> Result<TransportCost> {
    cfg.validate()?;
    let (m, ca) = tape.shape(a);
    let (p, cb) = tape.shape(b);
    if ca != 1 || cb != 1 || m == 0 || p == 0 {
        return Err(Error::shape("entropic_ot", (m, ca), (p, cb)));
    }
    if !tape.value(a).is_finite() || !tape.value(b).is_finite() {
        return Err(Error::NonFinite("sinkhorn inputs"));
    }
    let cost = tape.pairwise_sq_dist(a, b)?;
    let schedule = cfg.schedule(tape.value(cost));
    let plan = tape.sinkhorn_plan_scheduled(cost, &schedule)?;

    let pv = tape.value(plan);
    let mut violation = 0.0;
    for i in 0..m {
        let row: f64 = pv.row_slice(i).iter().sum();
        violation += math::abs(row - 1.0 / m as f64);
    }

    let weighted = tape.mul(plan, cost)?;
    let value = tape.sum(weighted);
    Ok(TransportCost {
        value,
        marginal_violation: violation,
    })
}

/// Debiased Sinkhorn divergence
/// `OT(a, b) - (OT(a, a) + OT(b, b)) / 2`, returned with the worst row
/// marginal violation over the three transport problems.
pub fn sinkhorn_divergence(tape: &mut Tape, a: Var, b: Var, cfg: &SinkhornConfig) -> Result<(Var, f64)> {
    let ab = entropic_ot(tape, a, b, cfg)?;
    let aa = entropic_ot(tape, a, a, cfg)?;
    let bb = entropic_ot(tape, b, b, cfg)?;
    let selfs = tape.add(aa.value, bb.value)?;
    let half = tape.scale(selfs, 0.5);
    let value = tape.sub(ab.value, half)?;
    let violation = ab
        .marginal_violation
        .max(aa.marginal_violation)
        .max(bb.marginal_violation);
    Ok((value, violation))
}

fn check_column(tape: &Tape, v: Var, op: &'static str) -> Result<()> {
    let (r, c) = tape.shape(v);
    if c != 1 || r == 0 {
        return Err(Error::shape(op, (r, c), (r.max(1), 1)));
    }
    if !tape.value(v).is_finite() {
        return Err(Error::NonFinite(op));
    }
    Ok(())
}

/// `(mean, population variance)` of a column, on the tape.
fn moments(tape: &mut Tape, a: Var) -> Result<(Var, Var)> {
    let mean = tape.mean(a)?;
    let centered = tape.sub(a, mean)?;
    let sq = tape.square(centered);
    let var = tape.mean(sq)?;
    Ok((mean, var))
}

/// `|mean(a) - mean(b)|`.
pub fn mean_gap_loss(tape: &mut Tape, a: Var, b: Var) -> Result<Var> {
    check_column(tape, a, "mean_gap_loss")?;
    check_column(tape, b, "mean_gap_loss")?;
    let ma = tape.mean(a)?;
    let mb = tape.mean(b)?;
    let d = tape.sub(ma, mb)?;
    Ok(tape.abs(d))
}

/// `|mean(a) - mean(b)| + |var(a) - var(b)|` with population variances.
pub fn moment_loss(tape: &mut Tape, a: Var, b: Var) -> Result<Var> {
    check_column(tape, a, "moment_loss")?;
    check_column(tape, b, "moment_loss")?;
    let (ma, va) = moments(tape, a)?;
    let (mb, vb) = moments(tape, b)?;
    let dm = tape.sub(ma, mb)?;
    let dm = tape.abs(dm);
    let dv = tape.sub(va, vb)?;
    let dv = tape.abs(dv);
    tape.add(dm, dv)
}

/// Output-level loss: Sinkhorn divergence plus moment matching.
pub fn dist_loss(tape: &mut Tape, a: Var, b: Var, cfg: &SinkhornConfig) -> Result<(Var, f64)> {
    let (sinkhorn, violation) = sinkhorn_divergence(tape, a, b, cfg)?;
    let moment = moment_loss(tape, a, b)?;
    Ok((tape.add(sinkhorn, moment)?, violation))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn col(tape: &mut Tape, xs: &[f64]) -> Var {
        tape.param(Tensor::column(xs.to_vec()))
    }

    fn eval(f: impl FnOnce(&mut Tape) -> Var) -> f64 {
        let mut tape = Tape::new();
        let v = f(&mut tape);
        tape.scalar(v).unwrap()
    }

    #[test]
    fn sampling_small_groups_returns_everything() {
        let groups = GroupIndex {
            g0: vec![4, 7, 9],
            g1: (10..1000).collect(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (s0, s1) = sample_group_nodes(&groups, 500, &mut rng).unwrap();
        assert_eq!(s0, vec![4, 7, 9]);
        assert_eq!(s1.len(), 500);
        assert!(s1.iter().all(|i| groups.g1.contains(i)));
        let mut dedup = s1.clone();
        dedup.dedup();
        assert_eq!(dedup.len(), 500);
    }

    #[test]
    fn sampling_is_seeded() {
        let groups = GroupIndex {
            g0: (0..50).collect(),
            g1: (50..120).collect(),
        };
        let a = sample_group_nodes(&groups, 10, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = sample_group_nodes(&groups, 10, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
        let (full, _) = sample_group_nodes(&groups, 50, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(full, groups.g0);
    }

    #[test]
    fn sampling_rejects_empty_group() {
        let groups = GroupIndex {
            g0: vec![1],
            g1: vec![],
        };
        let err = sample_group_nodes(&groups, 5, &mut ChaCha8Rng::seed_from_u64(0)).unwrap_err();
        assert_eq!(err, Error::EmptyGroup(1));
    }

    #[test]
    fn mmd_scalar_pair_by_hand() {
        let v = eval(|t| {
            let a = col(t, &[0.0]);
            let b = col(t, &[1.0]);
            mmd_rbf(t, a, b, Bandwidth::Fixed(1.0)).unwrap()
        });
        let expected = 2.0 - 2.0 * (-0.5f64).exp();
        assert!((v - expected).abs() < 1e-15);
        assert!((v - 0.786939).abs() < 1e-6);
    }

    #[test]
    fn mmd_identical_sets_is_exactly_zero() {
        let v = eval(|t| {
            let a = t.param(Tensor::from_rows(&[vec![0.3, 1.0], vec![-2.0, 0.5]]).unwrap());
            let b = t.param(Tensor::from_rows(&[vec![0.3, 1.0], vec![-2.0, 0.5]]).unwrap());
            mmd_rbf(t, a, b, Bandwidth::Median).unwrap()
        });
        assert_eq!(v, 0.0);
    }

    #[test]
    fn median_bandwidth_falls_back_to_one() {
        let z = Tensor::zeros(3, 2);
        assert_eq!(median_bandwidth(&z, &z), 1.0);
        let a = Tensor::column(vec![0.0, 1.0]);
        let b = Tensor::column(vec![3.0]);
        // distances 1, 3, 2
        assert_eq!(median_bandwidth(&a, &b), 2.0);
        let b = Tensor::column(vec![3.0, 7.0]);
        // distances 1, 3, 7, 2, 6, 4 -> median (3 + 4) / 2
        assert_eq!(median_bandwidth(&a, &b), 3.5);
    }

    #[test]
    fn sinkhorn_singletons_give_raw_cost() {
        let v = eval(|t| {
            let a = col(t, &[0.0]);
            let b = col(t, &[1.0]);
            sinkhorn_divergence(t, a, b, &SinkhornConfig::default()).unwrap().0
        });
        assert_eq!(v, 1.0);
    }

    #[test]
    fn sinkhorn_identical_inputs_vanish() {
        let v = eval(|t| {
            let a = col(t, &[0.0, 1.0]);
            let b = col(t, &[0.0, 1.0]);
            let cfg = SinkhornConfig {
                epsilon: 1e-3,
                iterations: 50,
                anneal: false,
            };
            sinkhorn_divergence(t, a, b, &cfg).unwrap().0
        });
        assert!(v.abs() < 1e-6, "{v}");
        let v = eval(|t| {
            let a = col(t, &[0.4, -1.3, 2.2, 0.0]);
            sinkhorn_divergence(t, a, a, &SinkhornConfig::default()).unwrap().0
        });
        assert!(v.abs() < 1e-9);
    }

    #[test]
    fn moment_loss_by_hand() {
        let v = eval(|t| {
            let a = col(t, &[0.0, 2.0]);
            let b = col(t, &[1.0, 1.0]);
            moment_loss(t, a, b).unwrap()
        });
        assert_eq!(v, 1.0);
        let v = eval(|t| {
            let a = col(t, &[3.25]);
            let b = col(t, &[3.25]);
            moment_loss(t, a, b).unwrap()
        });
        assert_eq!(v, 0.0);
    }

    #[test]
    fn dist_loss_singletons() {
        let v = eval(|t| {
            let a = col(t, &[0.0]);
            let b = col(t, &[1.0]);
            dist_loss(t, a, b, &SinkhornConfig::default()).unwrap().0
        });
        assert_eq!(v, 2.0);
        let v = eval(|t| {
            let a = col(t, &[0.0, 0.0, 0.0]);
            let b = col(t, &[0.0, 0.0]);
            dist_loss(t, a, b, &SinkhornConfig::default()).unwrap().0
        });
        assert_eq!(v, 0.0);
    }

    #[test]
    fn non_finite_inputs_are_rejected() {
        let mut t = Tape::new();
        let a = col(&mut t, &[0.0, f64::NAN]);
        let b = col(&mut t, &[1.0]);
        assert!(sinkhorn_divergence(&mut t, a, b, &SinkhornConfig::default()).is_err());
        assert!(moment_loss(&mut t, a, b).is_err());
        assert!(mmd_rbf(&mut t, a, b, Bandwidth::Median).is_err());
    }

    #[test]
    fn mean_gap_loss_ignores_spread() {
        let v = eval(|t| {
            let a = col(t, &[0.0, 2.0]);
            let b = col(t, &[1.5]);
            mean_gap_loss(t, a, b).unwrap()
        });
        assert_eq!(v, 0.5);
    }
}

//! Accuracy and group-fairness metrics for continuous predictions.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fairness::GroupIndex;
use crate::math;

fn pick(values: &[f64], idx: &[usize]) -> Result<Vec<f64>> {
    idx.iter()
        .map(|&i| {
            values.get(i).copied().ok_or(Error::IndexOutOfBounds {
                index: i,
                len: values.len(),
            })
        })
        .collect()
}

fn group_values(values: &[f64], groups: &GroupIndex) -> Result<(Vec<f64>, Vec<f64>)> {
    groups.ensure_non_empty()?;
    Ok((pick(values, &groups.g0)?, pick(values, &groups.g1)?))
}

/// `|mean(G0) - mean(G1)|`.
pub fn mean_gap(values: &[f64], groups: &GroupIndex) -> Result<f64> {
    let (a, b) = group_values(values, groups)?;
    Ok(math::abs(math::mean(&a) - math::mean(&b)))
}

/// `|Var(G0) - Var(G1)|` with population variances.
pub fn variance_gap(values: &[f64], groups: &GroupIndex) -> Result<f64> {
    let (a, b) = group_values(values, groups)?;
    Ok(math::abs(math::variance(&a) - math::variance(&b)))
}

fn sorted(xs: &[f64]) -> Result<Vec<f64>> {
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("wasserstein_1d input"));
    }
    let mut v = xs.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    Ok(v)
}

/// Exact W1 distance between the empirical distributions of `a` and `b`.
///
/// Integrates `|F_a^{-1}(t) - F_b^{-1}(t)|` over `t` in `[0, 1]`. Both
/// quantile functions are step functions with jumps at `i / m` and `j / p`;
/// the breakpoints are merged by comparing `i * p` with `j * m` in integers,
/// so equal sizes reduce to the sorted pairing without rounding drift.
pub fn wasserstein_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() {
        return Err(Error::EmptyGroup(0));
    }
    if b.is_empty() {
        return Err(Error::EmptyGroup(1));
    }
    let a = sorted(a)?;
    let b = sorted(b)?;
    let (m, p) = (a.len() as u128, b.len() as u128);
    let total = m * p;
    let (mut i, mut j) = (0usize, 0usize);
    // positions in units of 1 / (m p)
    let mut pos: u128 = 0;
    let mut acc = 0.0;
    while i < a.len() && j < b.len() {
        let next_a = (i as u128 + 1) * p;
        let next_b = (j as u128 + 1) * m;
        let next = next_a.min(next_b);
        let width = (next - pos) as f64 / total as f64;
        acc += width * math::abs(a[i] - b[j]);
        pos = next;
        if next_a == next {
            i += 1;
        }
        if next_b == next {
            j += 1;
        }
    }
    Ok(acc)
}

/// MSE and MAE of `pred` against `target` over `mask`.
pub fn mse_mae(pred: &[f64], target: &[f64], mask: &[usize]) -> Result<(f64, f64)> {
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    let p = pick(pred, mask)?;
    let t = pick(target, mask)?;
    let n = mask.len() as f64;
    let mse = p.iter().zip(&t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n;
    let mae = p.iter().zip(&t).map(|(a, b)| math::abs(a - b)).sum::<f64>() / n;
    Ok((mse, mae))
}

/// Evaluation summary for one node split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub split: String,
    pub mse: f64,
    pub mae: f64,
    /// Mean gap of predictions between groups.
    pub mg: f64,
    /// Variance gap of predictions between groups.
    pub vg: f64,
    /// W1 distance between group prediction distributions.
    pub wd: f64,
    pub group_sizes: (usize, usize),
    pub group_means: (f64, f64),
    pub group_vars: (f64, f64),
    /// The same three gaps measured on the ground-truth targets.
    pub label_mg: f64,
    pub label_vg: f64,
    pub label_wd: f64,
}

impl MetricsReport {
    /// Computes every metric over the nodes in `mask`.
    pub fn compute(
        split: &str,
        pred: &[f64],
        target: &[f64],
        sensitive: &[u8],
        mask: &[usize],
    ) -> Result<Self> {
        let (mse, mae) = mse_mae(pred, target, mask)?;
        let groups = GroupIndex::from_nodes(mask, sensitive);
        let (p0, p1) = group_values(pred, &groups)?;
        let (y0, y1) = group_values(target, &groups)?;
        Ok(MetricsReport {
            split: split.into(),
            mse,
            mae,
            mg: math::abs(math::mean(&p0) - math::mean(&p1)),
            vg: math::abs(math::variance(&p0) - math::variance(&p1)),
            wd: wasserstein_1d(&p0, &p1)?,
            group_sizes: (p0.len(), p1.len()),
            group_means: (math::mean(&p0), math::mean(&p1)),
            group_vars: (math::variance(&p0), math::variance(&p1)),
            label_mg: math::abs(math::mean(&y0) - math::mean(&y1)),
            label_vg: math::abs(math::variance(&y0) - math::variance(&y1)),
            label_wd: wasserstein_1d(&y0, &y1)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn groups(g0: &[usize], g1: &[usize]) -> GroupIndex {
        GroupIndex {
            g0: g0.to_vec(),
            g1: g1.to_vec(),
        }
    }

    #[test]
    fn mean_gap_by_hand() {
        let y = [0.0, 2.0, 3.0];
        assert_eq!(mean_gap(&y, &groups(&[0, 1], &[2])).unwrap(), 2.0);
        let shifted: Vec<f64> = y.iter().map(|v| v + 10.0).collect();
        assert_eq!(mean_gap(&shifted, &groups(&[0, 1], &[2])).unwrap(), 2.0);
        let eq = [1.0, 3.0, 2.0];
        assert_eq!(mean_gap(&eq, &groups(&[0, 1], &[2])).unwrap(), 0.0);
    }

    #[test]
    fn variance_gap_by_hand() {
        let y = [0.0, 2.0, 1.0, 1.0];
        assert_eq!(variance_gap(&y, &groups(&[0, 1], &[2, 3])).unwrap(), 1.0);
        let c = [4.0, 4.0, -1.0, -1.0];
        assert_eq!(variance_gap(&c, &groups(&[0, 1], &[2, 3])).unwrap(), 0.0);
        let s = [0.0, 2.0, 101.0, 101.0];
        assert_eq!(variance_gap(&s, &groups(&[0, 1], &[2, 3])).unwrap(), 1.0);
    }

    #[test]
    fn empty_groups_are_errors() {
        assert_eq!(mean_gap(&[1.0], &groups(&[], &[0])).unwrap_err(), Error::EmptyGroup(0));
        assert_eq!(variance_gap(&[1.0], &groups(&[0], &[])).unwrap_err(), Error::EmptyGroup(1));
        assert!(wasserstein_1d(&[], &[1.0]).is_err());
        assert_eq!(mse_mae(&[1.0], &[1.0], &[]).unwrap_err(), Error::EmptyMask);
    }

    #[test]
    fn wasserstein_hand_cases() {
        assert_eq!(wasserstein_1d(&[0.0, 1.0], &[1.0, 2.0]).unwrap(), 1.0);
        assert_eq!(wasserstein_1d(&[0.0], &[0.0, 2.0]).unwrap(), 1.0);
        assert_eq!(wasserstein_1d(&[3.0, 1.0, 2.0], &[2.0, 3.0, 1.0]).unwrap(), 0.0);
        // a = {0, 3}, b = {1, 1, 1}: breakpoints 1/3, 1/2, 2/3
        // 1/3*1 + 1/6*1 + 1/6*2 + 1/3*2 = 1.5
        assert!((wasserstein_1d(&[0.0, 3.0], &[1.0, 1.0, 1.0]).unwrap() - 1.5).abs() < 1e-15);
    }

    #[test]
    fn mse_mae_by_hand() {
        let (mse, mae) = mse_mae(&[1.0, -3.0], &[0.0, 0.0], &[0, 1]).unwrap();
        assert_eq!((mse, mae), (5.0, 2.0));
        assert_eq!(mse_mae(&[1.0, 2.0], &[1.0, 2.0], &[0, 1]).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn report_uses_predictions_and_labels() {
        let pred = [0.0, 2.0, 3.0, 3.0];
        let target = [0.0, 0.0, 1.0, 1.0];
        let s = [0, 0, 1, 1];
        let r = MetricsReport::compute("test", &pred, &target, &s, &[0, 1, 2, 3]).unwrap();
        assert_eq!(r.mg, 2.0);
        assert_eq!(r.vg, 1.0);
        assert_eq!(r.wd, 2.0);
        assert_eq!(r.group_sizes, (2, 2));
        assert_eq!(r.label_mg, 1.0);
        assert_eq!(r.label_wd, 1.0);
        assert_eq!(vec![r.split.as_str()], vec!["test"]);
    }
}

//! Fixed-iteration Sinkhorn solver for uniform marginals, recorded for
//! reverse-mode differentiation through every iteration.
//!
//! The iterates are the log-domain updates
//!
//! ```text
//! f_i = -eps * ln( (1/p) * sum_j exp((g_j - C_ij) / eps) )
//! g_j = -eps * ln( (1/m) * sum_i exp((f_i - C_ij) / eps) )
//! ```
//!
//! starting from `g = 0`. They are evaluated against a stabilized kernel
//! `K_ij = exp((F_i + G_j - C_ij) / eps)` for reference potentials `F, G`:
//! with `v_j = exp((g_j - G_j) / eps)` the row update is
//! `f_i = F_i - eps * ln(S_i / p)` where `S_i = sum_j K_ij v_j`, and the
//! column update is symmetric. Only the kernel needs exponentials. When a
//! sum drops below `exp(-BOUND)` the reference is moved to the current
//! soft minimum, so every kernel entry is at most 1 and each sum is at
//! least 1, and the step is redone.
//!
//! `eps` may change from one iteration to the next; a new kernel is built
//! whenever it does. The plan is formed with the last value.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::tensor::Tensor;

const BOUND: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Axis {
    /// Updates `f`, summing over columns.
    Rows,
    /// Updates `g`, summing over rows.
    Cols,
}

#[derive(Debug)]
struct HalfStep {
    axis: Axis,
    kernel: usize,
    /// The scaling vector multiplied into the kernel (`v` for rows, `u`
    /// for columns).
    scale: Vec<f64>,
    sums: Vec<f64>,
}

/// Everything the backward pass needs.
#[derive(Debug)]
pub(crate) struct SinkhornRecord {
    eps: f64,
    kernels: Vec<Tensor>,
    steps: Vec<HalfStep>,
}

/// Row-stabilized kernel: `F_i = min_j (C_ij - g_j)`, `G = g`.
fn row_kernel(c: &Tensor, g: &[f64], inv_eps: f64) -> (Tensor, Vec<f64>) {
    let (m, p) = c.shape();
    let mut k = Tensor::zeros(m, p);
    let mut fref = vec![0.0; m];
    for i in 0..m {
        let row = c.row_slice(i);
        let lo = row
            .iter()
            .zip(g)
            .map(|(cij, gj)| cij - gj)
            .fold(f64::INFINITY, f64::min);
        fref[i] = lo;
        for (kij, (cij, gj)) in k.data_mut()[i * p..(i + 1) * p].iter_mut().zip(row.iter().zip(g)) {
            *kij = math::exp((lo - (cij - gj)) * inv_eps);
        }
    }
    (k, fref)
}

/// Column-stabilized kernel: `F = f`, `G_j = min_i (C_ij - f_i)`.
fn col_kernel(c: &Tensor, f: &[f64], inv_eps: f64) -> (Tensor, Vec<f64>) {
    let (m, p) = c.shape();
    let mut lo = vec![f64::INFINITY; p];
    for (i, fi) in f.iter().enumerate() {
        for (l, cij) in lo.iter_mut().zip(c.row_slice(i)) {
            *l = l.min(cij - fi);
        }
    }
    let mut k = Tensor::zeros(m, p);
    for (i, fi) in f.iter().enumerate() {
        let row = c.row_slice(i);
        for (kij, (cij, l)) in k.data_mut()[i * p..(i + 1) * p].iter_mut().zip(row.iter().zip(&lo)) {
            *kij = math::exp((l - (cij - fi)) * inv_eps);
        }
    }
    (k, lo)
}

fn row_sums(k: &Tensor, v: &[f64], out: &mut [f64]) {
    for (i, s) in out.iter_mut().enumerate() {
        *s = k.row_slice(i).iter().zip(v).map(|(a, b)| a * b).sum();
    }
}

fn col_sums(k: &Tensor, u: &[f64], out: &mut [f64]) {
    out.fill(0.0);
    for (i, ui) in u.iter().enumerate() {
        for (t, kij) in out.iter_mut().zip(k.row_slice(i)) {
            *t += kij * ui;
        }
    }
}

fn sums_ok(sums: &[f64]) -> bool {
    let lo = math::exp(-BOUND);
    sums.iter().all(|&s| s >= lo && s.is_finite())
}

/// Runs one row/column update per entry of `schedule`, with that entry as
/// `eps`, on the `m x p` cost and returns the plan
/// `pi_ij = exp((f_i + g_j - C_ij) / eps) / (m p)` for the last `eps`.
pub(crate) fn solve(c: &Tensor, schedule: &[f64]) -> (Tensor, SinkhornRecord) {
    let (m, p) = c.shape();
    let (mf, pf) = (m as f64, p as f64);
    let mut eps = schedule[0];
    let mut inv_eps = 1.0 / eps;

    let mut f = vec![0.0; m];
    let mut g = vec![0.0; p];
    let (k0, mut fref) = row_kernel(c, &g, inv_eps);
    let mut gref = g.clone();
    let mut kernels = vec![k0];
    let mut u = vec![1.0; m];
    let mut v = vec![1.0; p];
    let mut steps = Vec::with_capacity(2 * schedule.len());
    let mut s = vec![0.0; m];
    let mut t = vec![0.0; p];

    for &e in schedule {
        let rebuild = e != eps;
        eps = e;
        inv_eps = 1.0 / eps;
        if !rebuild {
            row_sums(kernels.last().expect("kernel"), &v, &mut s);
        }
        if rebuild || !sums_ok(&s) {
            let (k, fr) = row_kernel(c, &g, inv_eps);
            kernels.push(k);
            fref = fr;
            gref.copy_from_slice(&g);
            v.fill(1.0);
            row_sums(kernels.last().expect("kernel"), &v, &mut s);
        }
        for i in 0..m {
            f[i] = fref[i] - eps * math::ln(s[i] / pf);
            u[i] = pf / s[i];
        }
        steps.push(HalfStep {
            axis: Axis::Rows,
            kernel: kernels.len() - 1,
            scale: v.clone(),
            sums: s.clone(),
        });

        col_sums(kernels.last().expect("kernel"), &u, &mut t);
        if !sums_ok(&t) {
            let (k, gr) = col_kernel(c, &f, inv_eps);
            kernels.push(k);
            gref = gr;
            fref.copy_from_slice(&f);
            u.fill(1.0);
            col_sums(kernels.last().expect("kernel"), &u, &mut t);
        }
        for j in 0..p {
            g[j] = gref[j] - eps * math::ln(t[j] / mf);
            v[j] = mf / t[j];
        }
        steps.push(HalfStep {
            axis: Axis::Cols,
            kernel: kernels.len() - 1,
            scale: u.clone(),
            sums: t.clone(),
        });
    }

    let mut plan = Tensor::zeros(m, p);
    let norm = 1.0 / (mf * pf);
    for i in 0..m {
        let row = c.row_slice(i);
        for (x, (cij, gj)) in plan.data_mut()[i * p..(i + 1) * p].iter_mut().zip(row.iter().zip(&g)) {
            *x = math::exp((f[i] + gj - cij) * inv_eps) * norm;
        }
    }
    (plan, SinkhornRecord { eps, kernels, steps })
}

/// Gradient of the loss with respect to the cost, given the plan and the
/// gradient with respect to the plan.
pub(crate) fn backward(record: &SinkhornRecord, plan: &Tensor, up: &Tensor) -> Tensor {
    let (m, p) = plan.shape();
    let inv_eps = 1.0 / record.eps;
    let mut dc = Tensor::zeros(m, p);
    let mut df = vec![0.0; m];
    let mut dg = vec![0.0; p];

    // pi depends on C directly and on the final potentials
    for i in 0..m {
        for j in 0..p {
            let a = up.get(i, j) * plan.get(i, j) * inv_eps;
            dc.data_mut()[i * p + j] = -a;
            df[i] += a;
            dg[j] += a;
        }
    }

    // dg holds the adjoint of the latest g, df that of the latest f
    for step in record.steps.iter().rev() {
        let k = &record.kernels[step.kernel];
        match step.axis {
            Axis::Cols => {
                // g_j depends on C_ij with weight Q_ij and on f_i with -Q_ij,
                // Q_ij = K_ij u_i / T_j
                let w: Vec<f64> = dg.iter().zip(&step.sums).map(|(d, t)| d / t).collect();
                for i in 0..m {
                    let ui = step.scale[i];
                    let mut acc = 0.0;
                    let dc_row = &mut dc.data_mut()[i * p..(i + 1) * p];
                    for ((d, kij), wj) in dc_row.iter_mut().zip(k.row_slice(i)).zip(&w) {
                        let q = kij * ui * wj;
                        *d += q;
                        acc += q;
                    }
                    df[i] -= acc;
                }
                dg.fill(0.0);
            }
            Axis::Rows => {
                // P_ij = K_ij v_j / S_i
                for i in 0..m {
                    let wi = df[i] / step.sums[i];
                    if wi == 0.0 {
                        continue;
                    }
                    let dc_row = &mut dc.data_mut()[i * p..(i + 1) * p];
                    for (((d, kij), vj), gj) in dc_row
                        .iter_mut()
                        .zip(k.row_slice(i))
                        .zip(&step.scale)
                        .zip(dg.iter_mut())
                    {
                        let q = kij * vj * wi;
                        *d += q;
                        *gj -= q;
                    }
                }
                df.fill(0.0);
            }
        }
    }
    dc
}

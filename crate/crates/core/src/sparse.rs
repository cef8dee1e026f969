//! Compressed sparse row matrices for message passing.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Square CSR matrix. Column indices within a row are strictly increasing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from `(row, col, value)` triplets. Duplicate coordinates are
    /// summed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut sorted: Vec<(usize, usize, f64)> = Vec::with_capacity(triplets.len());
        for &(r, c, v) in triplets {
            if r >= n || c >= n {
                return Err(Error::IndexOutOfBounds {
                    index: r.max(c),
                    len: n,
                });
            }
            sorted.push((r, c, v));
        }
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            if last == Some((r, c)) {
                *values.last_mut().expect("previous entry") += v;
                continue;
            }
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            values.push(v);
            last = Some((r, c));
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(CsrMatrix {
            n,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `(col, value)` pairs of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    /// Value at `(i, j)`, if stored.
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        let cols = &self.col_idx[range.clone()];
        cols.binary_search(&j).ok().map(|k| self.values[range.start + k])
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    /// `self * dense`.
    pub fn matmul_dense(&self, dense: &Tensor) -> Result<Tensor> {
        if dense.rows() != self.n {
            return Err(Error::shape("sparse_matmul", (self.n, self.n), dense.shape()));
        }
        let cols = dense.cols();
        let mut out = Tensor::zeros(self.n, cols);
        let out_data = out.data_mut();
        for i in 0..self.n {
            let out_row = &mut out_data[i * cols..(i + 1) * cols];
            for (j, w) in self.row(i) {
                for (o, &x) in out_row.iter_mut().zip(dense.row_slice(j)) {
                    *o += w * x;
                }
            }
        }
        Ok(out)
    }

    /// `self^T * dense`.
    pub fn transpose_matmul_dense(&self, dense: &Tensor) -> Result<Tensor> {
        if dense.rows() != self.n {
            return Err(Error::shape("sparse_matmul_t", (self.n, self.n), dense.shape()));
        }
        let cols = dense.cols();
        let mut out = Tensor::zeros(self.n, cols);
        let out_data = out.data_mut();
        for i in 0..self.n {
            let src = dense.row_slice(i);
            for (j, w) in self.row(i) {
                let out_row = &mut out_data[j * cols..(j + 1) * cols];
                for (o, &x) in out_row.iter_mut().zip(src) {
                    *o += w * x;
                }
            }
        }
        Ok(out)
    }

    /// Dense copy, for tests and small problems.
    pub fn to_dense(&self) -> Tensor {
        let mut t = Tensor::zeros(self.n, self.n);
        for (i, j, v) in self.iter() {
            t.set(i, j, v);
        }
        t
    }
}

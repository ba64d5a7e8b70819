//! Dense row-major matrices and the handful of kernels mini-batch
//! backpropagation needs.
//!
//! Every product kernel computes each output element in exactly one task,
//! summing over the shared dimension strictly left to right starting from
//! `0.0`. Work is split by fixed-size blocks of output rows, never by thread
//! count, so results are bitwise identical to a naive triple loop and across
//! any rayon pool size.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Output rows handed to one task.
const ROW_BLOCK: usize = 16;
/// Output columns touched per pass over a depth tile.
const COL_TILE: usize = 256;
/// Shared-dimension entries streamed per pass.
const DEPTH_TILE: usize = 128;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// # Panics
    /// If either dimension is zero.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.data[i * cols + j] = f(i, j);
            }
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::invalid("ragged rows"));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// Copies the listed rows, in order, into a new matrix.
    pub fn gather_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix::new(idx.len(), self.cols, data).expect("gather of at least one row")
    }

    pub fn slice_rows(&self, range: Range<usize>) -> Result<Matrix> {
        if range.start >= range.end || range.end > self.rows {
            return Err(Error::invalid(format!(
                "row range {range:?} outside 0..{}",
                self.rows
            )));
        }
        Matrix::new(
            range.len(),
            self.cols,
            self.data[range.start * self.cols..range.end * self.cols].to_vec(),
        )
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Adds `v[j]` to every row's column `j`.
    pub fn add_row_vector(&mut self, v: &[f64]) -> Result<()> {
        if v.len() != self.cols {
            return Err(Error::Shape {
                op: "add_row_vector",
                left: self.shape(),
                right: (1, v.len()),
            });
        }
        for row in self.data.chunks_exact_mut(self.cols) {
            for (x, b) in row.iter_mut().zip(v) {
                *x += b;
            }
        }
        Ok(())
    }

    /// Column sums, accumulated top to bottom.
    pub fn column_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for row in self.data.chunks_exact(self.cols) {
            for (acc, x) in out.iter_mut().zip(row) {
                *acc += x;
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }
}

/// Accumulates `out[i][j] += coef(i, t) * b[t][j]` over `t` ascending into a
/// block of output rows starting at `row0`.
fn accumulate_block<F>(out: &mut [f64], row0: usize, depth: usize, b: &Matrix, coef: &F)
where
    F: Fn(usize, usize) -> f64 + Sync,
{
    let n = b.cols;
    let nrows = out.len() / n;
    for j0 in (0..n).step_by(COL_TILE) {
        let j1 = (j0 + COL_TILE).min(n);
        for t0 in (0..depth).step_by(DEPTH_TILE) {
            let t1 = (t0 + DEPTH_TILE).min(depth);
            for r in 0..nrows {
                let acc = &mut out[r * n + j0..r * n + j1];
                for t in t0..t1 {
                    let s = coef(row0 + r, t);
                    let brow = &b.data[t * n + j0..t * n + j1];
                    for (o, &bv) in acc.iter_mut().zip(brow) {
                        *o += s * bv;
                    }
                }
            }
        }
    }
}

fn product<F>(m: usize, depth: usize, b: &Matrix, coef: F) -> Matrix
where
    F: Fn(usize, usize) -> f64 + Sync,
{
    let n = b.cols;
    let mut out = Matrix::zeros(m, n);
    out.data
        .par_chunks_mut(ROW_BLOCK * n)
        .enumerate()
        .for_each(|(blk, chunk)| accumulate_block(chunk, blk * ROW_BLOCK, depth, b, &coef));
    out
}

/// `a · b` for `a` [m×k], `b` [k×n].
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::Shape {
            op: "matmul",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let k = a.cols;
    Ok(product(a.rows, k, b, |i, t| a.data[i * k + t]))
}

/// `aᵀ · b` for `a` [k×m], `b` [k×n], without materializing the transpose.
pub fn matmul_tn(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.rows != b.rows {
        return Err(Error::Shape {
            op: "matmul_tn",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let m = a.cols;
    Ok(product(m, a.rows, b, |i, t| a.data[t * m + i]))
}

/// `a · bᵀ` for `a` [m×k], `b` [n×k].
pub fn matmul_nt(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.cols {
        return Err(Error::Shape {
            op: "matmul_nt",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let bt = b.transpose();
    let k = a.cols;
    Ok(product(a.rows, k, &bt, |i, t| a.data[i * k + t]))
}

/// `target += scale · source`.
pub fn axpy_inplace(target: &mut Matrix, scale: f64, source: &Matrix) -> Result<()> {
    if target.shape() != source.shape() {
        return Err(Error::Shape {
            op: "axpy_inplace",
            left: target.shape(),
            right: source.shape(),
        });
    }
    for (t, s) in target.data.iter_mut().zip(&source.data) {
        *t += scale * s;
    }
    Ok(())
}

/// Logistic function, split by sign so neither branch overflows.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn map_sigmoid(m: &Matrix) -> Matrix {
    m.map(sigmoid)
}

#[cfg(test)]
pub(crate) mod oracle {
    use super::Matrix;

    pub fn naive_tn(a: &Matrix, b: &Matrix) -> Matrix {
        let (k, m, n) = (a.rows(), a.cols(), b.cols());
        Matrix::from_fn(m, n, |i, j| {
            let mut acc = 0.0;
            for t in 0..k {
                acc += a.get(t, i) * b.get(t, j);
            }
            acc
        })
    }

    pub fn naive_nt(a: &Matrix, b: &Matrix) -> Matrix {
        let (m, k, n) = (a.rows(), a.cols(), b.rows());
        Matrix::from_fn(m, n, |i, j| {
            let mut acc = 0.0;
            for t in 0..k {
                acc += a.get(i, t) * b.get(j, t);
            }
            acc
        })
    }

    pub fn naive_nn(a: &Matrix, b: &Matrix) -> Matrix {
        let (m, k, n) = (a.rows(), a.cols(), b.cols());
        Matrix::from_fn(m, n, |i, j| {
            let mut acc = 0.0;
            for t in 0..k {
                acc += a.get(i, t) * b.get(t, j);
            }
            acc
        })
    }
}

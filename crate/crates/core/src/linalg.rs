//! Dense row-major matrices and the handful of vector kernels the network needs.
//!
//! Shapes here are small (at most a few hundred per side), so plain loops over
//! contiguous storage are both fast enough and easy to keep bit-deterministic.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat<F> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: Scalar> Mat<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![F::zero(); rows * cols],
        }
    }

    /// Builds from a row-major element source; `fill` is called `rows*cols` times.
    pub fn from_fn(rows: usize, cols: usize, mut fill: impl FnMut() -> F) -> Self {
        let data = (0..rows * cols).map(|_| fill()).collect();
        Mat { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[F] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [F] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[F] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [F] {
        &mut self.data
    }

    /// `out = self · x + b`. Panics on shape mismatch: shapes are fixed at
    /// model construction, so a mismatch is a programming error.
    pub fn mul_vec_add(&self, x: &[F], b: &[F], out: &mut Vec<F>) {
        assert_eq!(x.len(), self.cols, "matvec input length");
        assert_eq!(b.len(), self.rows, "matvec bias length");
        out.clear();
        out.reserve(self.rows);
        for (row, &bias) in self.data.chunks_exact(self.cols).zip(b) {
            let mut acc = bias;
            for (w, xi) in row.iter().zip(x) {
                acc += *w * *xi;
            }
            out.push(acc);
        }
    }

    /// `out = selfᵀ · y` (used for backpropagating through a layer).
    pub fn tmul_vec(&self, y: &[F], out: &mut Vec<F>) {
        assert_eq!(y.len(), self.rows, "transposed matvec input length");
        out.clear();
        out.resize(self.cols, F::zero());
        for (row, &yr) in self.data.chunks_exact(self.cols).zip(y) {
            for (o, w) in out.iter_mut().zip(row) {
                *o += *w * yr;
            }
        }
    }

    /// `self += y ⊗ x` (rank-one update; gradient of a linear layer).
    pub fn add_outer(&mut self, y: &[F], x: &[F]) {
        assert_eq!(y.len(), self.rows, "outer product row length");
        assert_eq!(x.len(), self.cols, "outer product col length");
        for (row, &yr) in self.data.chunks_exact_mut(self.cols).zip(y) {
            for (w, xi) in row.iter_mut().zip(x) {
                *w += yr * *xi;
            }
        }
    }
}

/// Elementwise tanh.
pub fn tanh_inplace<F: Scalar>(xs: &mut [F]) {
    for x in xs {
        *x = x.tanh();
    }
}

/// Cosine similarity; zero vectors yield 0 rather than NaN.
pub fn cosine<F: Scalar>(a: &[F], b: &[F]) -> F {
    assert_eq!(a.len(), b.len(), "cosine operands");
    let mut dot = F::zero();
    let mut na = F::zero();
    let mut nb = F::zero();
    for (x, y) in a.iter().zip(b) {
        dot += *x * *y;
        na += *x * *x;
        nb += *y * *y;
    }
    if na.is_zero() || nb.is_zero() {
        return F::zero();
    }
    dot / (na.sqrt() * nb.sqrt())
}

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major `f64` matrix.
///
/// Batched cell states use one row per sample, so a batch of `B` hidden
/// vectors of width `n` is a `B x n` matrix.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Mat({}x{})", self.rows, self.cols)?;
        if self.data.len() <= 64 {
            f.debug_list().entries(self.data.chunks(self.cols.max(1))).finish()?;
        }
        Ok(())
    }
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "Mat::from_vec",
                format!("{} values", rows * cols),
                data.len(),
            ));
        }
        Ok(Mat { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Mat { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        Mat::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    /// A single row vector.
    pub fn row_vector(v: &[f64]) -> Self {
        Mat {
            rows: 1,
            cols: v.len(),
            data: v.to_vec(),
        }
    }

    pub fn diag(d: &[f64]) -> Self {
        let n = d.len();
        Mat::from_fn(n, n, |i, j| if i == j { d[i] } else { 0.0 })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
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

    pub fn transpose(&self) -> Mat {
        Mat::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// Rows `start..end` as a new matrix.
    pub fn slice_rows(&self, start: usize, end: usize) -> Mat {
        Mat {
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
        }
    }

    /// Leading `rows x cols` block.
    pub fn top_left(&self, rows: usize, cols: usize) -> Mat {
        Mat::from_fn(rows, cols, |i, j| self.get(i, j))
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn scale(&mut self, c: f64) {
        self.data.iter_mut().for_each(|x| *x *= c);
    }

    pub fn scaled(&self, c: f64) -> Mat {
        let mut m = self.clone();
        m.scale(c);
        m
    }

    /// `self += c * other`
    pub fn axpy(&mut self, c: f64, other: &Mat) {
        assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
    }

    pub fn add_assign(&mut self, other: &Mat) {
        self.axpy(1.0, other);
    }

    pub fn sub(&self, other: &Mat) -> Mat {
        let mut m = self.clone();
        m.axpy(-1.0, other);
        m
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Mat {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Adds `b` to every row.
    pub fn add_row_broadcast(&mut self, b: &[f64]) {
        assert_eq!(b.len(), self.cols);
        for row in self.data.chunks_mut(self.cols) {
            for (x, bi) in row.iter_mut().zip(b) {
                *x += bi;
            }
        }
    }

    /// Column sums (sum over the batch dimension).
    pub fn column_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for row in self.data.chunks(self.cols.max(1)) {
            for (o, x) in out.iter_mut().zip(row) {
                *o += x;
            }
        }
        out
    }

    pub fn sum_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.sum_sq().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn max_abs_diff(&self, other: &Mat) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn matmul(&self, other: &Mat) -> Mat {
        let mut c = Mat::zeros(self.rows, other.cols);
        gemm(1.0, self, false, other, false, 0.0, &mut c);
        c
    }

    /// Product with a column vector.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// Row-wise Gram matrix `self * self^T`.
    pub fn gram_rows(&self) -> Mat {
        let mut g = Mat::zeros(self.rows, self.rows);
        gemm(1.0, self, false, self, true, 0.0, &mut g);
        g
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four accumulators let the compiler vectorize the reduction
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// `c = alpha * op(a) * op(b) + beta * c`, where `op` optionally transposes.
///
/// Panics on inconsistent shapes; callers validate user-facing shapes first.
pub fn gemm(alpha: f64, a: &Mat, ta: bool, b: &Mat, tb: bool, beta: f64, c: &mut Mat) {
    let (m, k) = if ta { (a.cols, a.rows) } else { (a.rows, a.cols) };
    let (kb, n) = if tb { (b.cols, b.rows) } else { (b.rows, b.cols) };
    assert_eq!(k, kb, "gemm inner dimension");
    assert_eq!((c.rows, c.cols), (m, n), "gemm output shape");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.scale(beta);
        return;
    }

    // Single-row products dominate the unbatched analysis runs; plain loops
    // beat the packed kernel there.
    if m == 1 && !ta {
        let x = a.as_slice();
        let out = c.as_mut_slice();
        if tb {
            for (j, o) in out.iter_mut().enumerate() {
                let v = alpha * dot(x, b.row(j));
                *o = if beta == 0.0 { v } else { beta * *o + v };
            }
        } else {
            if beta == 0.0 {
                out.iter_mut().for_each(|o| *o = 0.0);
            } else if beta != 1.0 {
                out.iter_mut().for_each(|o| *o *= beta);
            }
            for (p, &xp) in x.iter().enumerate() {
                let s = alpha * xp;
                if s == 0.0 {
                    continue;
                }
                for (o, bv) in out.iter_mut().zip(b.row(p)) {
                    *o += s * bv;
                }
            }
        }
        return;
    }

    let (rsa, csa) = if ta { (1, a.cols as isize) } else { (a.cols as isize, 1) };
    let (rsb, csb) = if tb { (1, b.cols as isize) } else { (b.cols as isize, 1) };
    if beta == 0.0 {
        c.fill(0.0);
    }
    // SAFETY: strides and dimensions describe exactly the owned buffers of
    // `a`, `b` and `c`, whose shapes were checked above; `c` does not alias.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            c.data.as_mut_ptr(),
            c.cols as isize,
            1,
        );
    }
}

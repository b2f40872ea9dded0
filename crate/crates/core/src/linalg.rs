//! Dense row-major matrices and the handful of vector kernels the networks need.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        check_len("matrix data", rows * cols, data.len())?;
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
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
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// `out = self * x`.
    pub fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        check_len("matrix-vector input", self.cols, x.len())?;
        check_len("matrix-vector output", self.rows, out.len())?;
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols.max(1))) {
            *o = dot(row, x);
        }
        if self.cols == 0 {
            out.iter_mut().for_each(|o| *o = 0.0);
        }
        Ok(())
    }

    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.rows];
        self.mul_vec_into(x, &mut out)?;
        Ok(out)
    }

    /// `out = self^T * x`, accumulated row by row.
    pub fn mul_transpose_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("transposed matrix-vector input", self.rows, x.len())?;
        let mut out = vec![0.0; self.cols];
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                axpy(xi, self.row(i), &mut out);
            }
        }
        Ok(out)
    }

    /// `self += scale * a b^T`.
    pub fn add_outer(&mut self, scale: f64, a: &[f64], b: &[f64]) -> Result<()> {
        check_len("outer product rows", self.rows, a.len())?;
        check_len("outer product cols", self.cols, b.len())?;
        for (i, &ai) in a.iter().enumerate() {
            let s = scale * ai;
            if s != 0.0 {
                axpy(s, b, self.row_mut(i));
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    pub fn frobenius_norm(&self) -> f64 {
        libm::sqrt(dot(&self.data, &self.data))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        let mut out = Matrix::zeros(self.rows, other.cols);
        gemm(1.0, self, false, other, false, 0.0, &mut out)?;
        Ok(out)
    }

    /// Inverse of a small square matrix by Gauss-Jordan elimination with
    /// partial pivoting. Fails when a pivot falls below `min_pivot`.
    pub fn inverse(&self, min_pivot: f64) -> Result<Matrix> {
        check_len("matrix inverse (square)", self.rows, self.cols)?;
        let n = self.rows;
        let mut a = self.clone();
        let mut inv = Matrix::identity(n);
        for col in 0..n {
            let pivot_row = (col..n)
                .max_by(|&x, &y| a.get(x, col).abs().total_cmp(&a.get(y, col).abs()))
                .unwrap_or(col);
            let pivot = a.get(pivot_row, col);
            if !(pivot.abs() >= min_pivot) {
                return Err(Error::Construction(alloc::format!(
                    "singular matrix: pivot {pivot:e} in column {col}"
                )));
            }
            if pivot_row != col {
                for j in 0..n {
                    a.data.swap(pivot_row * n + j, col * n + j);
                    inv.data.swap(pivot_row * n + j, col * n + j);
                }
            }
            let p = 1.0 / pivot;
            a.row_mut(col).iter_mut().for_each(|v| *v *= p);
            inv.row_mut(col).iter_mut().for_each(|v| *v *= p);
            for r in 0..n {
                if r == col {
                    continue;
                }
                let f = a.get(r, col);
                if f == 0.0 {
                    continue;
                }
                for j in 0..n {
                    let av = a.get(col, j);
                    let iv = inv.get(col, j);
                    a.data[r * n + j] -= f * av;
                    inv.data[r * n + j] -= f * iv;
                }
            }
        }
        Ok(inv)
    }
}

/// Dot product with four independent accumulators. The summation order is
/// fixed, so results are reproducible across runs.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y += alpha * x`.
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn norm2(x: &[f64]) -> f64 {
    libm::sqrt(dot(x, x))
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// `c = alpha * op(a) * op(b) + beta * c`, where `op` optionally transposes.
/// With `beta == 0` the previous contents of `c` are ignored, NaN included.
pub fn gemm(
    alpha: f64,
    a: &Matrix,
    transpose_a: bool,
    b: &Matrix,
    transpose_b: bool,
    beta: f64,
    c: &mut Matrix,
) -> Result<()> {
    let (m, k, rsa, csa) = if transpose_a {
        (a.cols, a.rows, 1, a.cols)
    } else {
        (a.rows, a.cols, a.cols, 1)
    };
    let (kb, n, rsb, csb) = if transpose_b {
        (b.cols, b.rows, 1, b.cols)
    } else {
        (b.rows, b.cols, b.cols, 1)
    };
    check_len("matrix product inner dimension", k, kb)?;
    check_len("matrix product rows", m, c.rows)?;
    check_len("matrix product columns", n, c.cols)?;
    if m == 0 || n == 0 {
        return Ok(());
    }
    if beta == 0.0 {
        c.data.fill(0.0);
    }
    // SAFETY: the dimensions and strides above describe views that lie
    // inside the three buffers, and `c` is borrowed mutably so it cannot
    // alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            rsa as isize,
            csa as isize,
            b.data.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.data.as_mut_ptr(),
            c.cols as isize,
            1,
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matvec_matches_naive_loop() {
        let m = Matrix::from_fn(3, 7, |i, j| (i as f64 + 1.0) * 0.1 - j as f64 * 0.03);
        let x: Vec<f64> = (0..7).map(|j| 0.5 - j as f64 * 0.07).collect();
        let y = m.mul_vec(&x).unwrap();
        for i in 0..3 {
            let naive: f64 = (0..7).map(|j| m.get(i, j) * x[j]).sum();
            assert!((y[i] - naive).abs() < 1e-14);
        }
    }

    #[test]
    fn transposed_product_agrees_with_explicit_transpose() {
        let m = Matrix::from_fn(4, 5, |i, j| ((i * 5 + j) as f64).sin());
        let x = [0.3, -0.2, 0.9, 0.1];
        let a = m.mul_transpose_vec(&x).unwrap();
        let b = m.transpose().mul_vec(&x).unwrap();
        assert!(max_abs_diff(&a, &b) < 1e-14);
    }

    #[test]
    fn inverse_of_well_conditioned_matrix() {
        let m = Matrix::from_row_major(3, 3, vec![4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0])
            .unwrap();
        let inv = m.inverse(1e-12).unwrap();
        let id = m.matmul(&inv).unwrap();
        assert!(max_abs_diff(id.as_slice(), Matrix::identity(3).as_slice()) < 1e-14);
    }

    #[test]
    fn gemm_transpose_flags() {
        let a = Matrix::from_fn(3, 4, |i, j| ((i * 4 + j) as f64).cos());
        let b = Matrix::from_fn(4, 2, |i, j| (i as f64) * 0.5 - (j as f64) * 0.25);
        let naive = Matrix::from_fn(3, 2, |i, j| (0..4).map(|k| a.get(i, k) * b.get(k, j)).sum());
        let (at, bt) = (a.transpose(), b.transpose());
        for (x, tx, y, ty) in [(&a, false, &b, false), (&at, true, &b, false), (&a, false, &bt, true), (&at, true, &bt, true)] {
            let mut c = Matrix::from_fn(3, 2, |_, _| f64::NAN);
            gemm(1.0, x, tx, y, ty, 0.0, &mut c).unwrap();
            assert!(max_abs_diff(c.as_slice(), naive.as_slice()) < 1e-14);
        }
        let mut c = naive.clone();
        gemm(2.0, &a, false, &b, false, -1.0, &mut c).unwrap();
        assert!(max_abs_diff(c.as_slice(), naive.as_slice()) < 1e-14);
        assert!(gemm(1.0, &a, true, &b, false, 0.0, &mut c).is_err());
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let m = Matrix::from_row_major(2, 2, vec![1.0, 2.0, 2.0, 4.0]).unwrap();
        assert!(matches!(m.inverse(1e-12), Err(Error::Construction(_))));
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let m = Matrix::zeros(2, 3);
        assert!(matches!(
            m.mul_vec(&[1.0, 2.0]),
            Err(Error::Dimension { expected: 3, actual: 2, .. })
        ));
    }
}

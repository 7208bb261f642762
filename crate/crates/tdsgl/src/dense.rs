//! Row-major dense matrices and the handful of kernels the trainer leans on.
//!
//! Everything is `f64`: gradient checks against central finite differences
//! need the headroom, and the determinism contract is easier to reason about
//! with a single precision throughout.

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Matrix { rows: r, cols: c, data }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Matrix { rows, cols, data }
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
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn fill(&mut self, v: f64) {
        self.data.fill(v);
    }

    /// self += scale * other
    pub fn add_scaled(&mut self, other: &Matrix, scale: f64) {
        assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += scale * b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Largest absolute element-wise difference.
    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!(self.data.len(), other.data.len());
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// y += alpha * x
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x.iter()) {
        *yi += alpha * xi;
    }
}

/// out = a · bᵀ for row-major `a` (m×k) and `b` (n×k), yielding m×n.
///
/// This is the pairwise-similarity shape: every row of `a` against every
/// row of `b`.
pub fn matmul_nt(a: &Matrix, b: &Matrix, out: &mut Matrix) {
    assert_eq!(a.cols(), b.cols(), "inner dimensions");
    assert_eq!(out.rows(), a.rows());
    assert_eq!(out.cols(), b.rows());
    let (m, k, n) = (a.rows(), a.cols(), b.rows());
    if m == 0 || n == 0 || k == 0 {
        out.fill(0.0);
        return;
    }
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            k as isize,
            1,
            b.data.as_ptr(),
            1,
            k as isize, // b transposed via strides
            0.0,
            out.data.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// out = beta*out + alpha * aᵀ · b for row-major `a` (k×m), `b` (k×n).
pub fn matmul_tn(alpha: f64, a: &Matrix, b: &Matrix, beta: f64, out: &mut Matrix) {
    assert_eq!(a.rows(), b.rows(), "inner dimensions");
    assert_eq!(out.rows(), a.cols());
    assert_eq!(out.cols(), b.cols());
    let (k, m, n) = (a.rows(), a.cols(), b.cols());
    if m == 0 || n == 0 || k == 0 {
        if beta == 0.0 {
            out.fill(0.0);
        } else if beta != 1.0 {
            out.scale(beta);
        }
        return;
    }
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            1,
            m as isize, // a transposed via strides
            b.data.as_ptr(),
            n as isize,
            1,
            beta,
            out.data.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// out (+)= alpha * a · b for row-major `a` (m×k), `b` (k×n).
pub fn matmul_nn(alpha: f64, a: &Matrix, b: &Matrix, beta: f64, out: &mut Matrix) {
    assert_eq!(a.cols(), b.rows(), "inner dimensions");
    assert_eq!(out.rows(), a.rows());
    assert_eq!(out.cols(), b.cols());
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    if m == 0 || n == 0 || k == 0 {
        if beta == 0.0 {
            out.fill(0.0);
        } else if beta != 1.0 {
            out.scale(beta);
        }
        return;
    }
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            k as isize,
            1,
            b.data.as_ptr(),
            n as isize,
            1,
            beta,
            out.data.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_nt_matches_naive() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]);
        let b = Matrix::from_rows(&[vec![7.0, 8.0], vec![9.0, 10.0]]);
        let mut out = Matrix::zeros(3, 2);
        matmul_nt(&a, &b, &mut out);
        for i in 0..3 {
            for j in 0..2 {
                assert_eq!(out.get(i, j), dot(a.row(i), b.row(j)));
            }
        }
    }

    #[test]
    fn matmul_nn_accumulates() {
        let a = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 2.0]]);
        let b = Matrix::from_rows(&[vec![3.0], vec![4.0]]);
        let mut out = Matrix::from_rows(&[vec![10.0], vec![10.0]]);
        matmul_nn(2.0, &a, &b, 1.0, &mut out);
        assert_eq!(out.get(0, 0), 10.0 + 2.0 * 3.0);
        assert_eq!(out.get(1, 0), 10.0 + 2.0 * 8.0);
    }

    #[test]
    fn matmul_tn_matches_naive() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]); // 2×3
        let b = Matrix::from_rows(&[vec![7.0, 8.0], vec![9.0, 10.0]]); // 2×2
        let mut out = Matrix::zeros(3, 2);
        matmul_tn(1.0, &a, &b, 0.0, &mut out);
        for i in 0..3 {
            for j in 0..2 {
                let expected: f64 = (0..2).map(|k| a.get(k, i) * b.get(k, j)).sum();
                assert_eq!(out.get(i, j), expected);
            }
        }
    }
}

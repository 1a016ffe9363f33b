//! Minimal dense matrix substrate.
//!
//! A [`Matrix`] is a row-major `Vec<f64>` plus a shape. The operation set is
//! exactly what the model and the losses need; shapes are validated on every
//! binary operation and there is no broadcasting, so the gradient code that
//! builds on top stays auditable. All values are finite by construction:
//! constructors reject NaN/Inf and the stable softmax keeps them out.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixRepr", into = "MatrixRepr")]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// Serialized form: shape-annotated flat array.
#[derive(Serialize, Deserialize)]
struct MatrixRepr {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TryFrom<MatrixRepr> for Matrix {
    type Error = Error;

    fn try_from(repr: MatrixRepr) -> Result<Self> {
        Matrix::new(repr.rows, repr.cols, repr.data)
    }
}

impl From<Matrix> for MatrixRepr {
    fn from(m: Matrix) -> Self {
        MatrixRepr {
            rows: m.rows,
            cols: m.cols,
            data: m.data,
        }
    }
}

impl Matrix {
    /// Builds a matrix from row-major data, validating shape and finiteness.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Contract(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::dimension(
                "matrix_new",
                format!("{rows}x{cols} ({} elements)", rows * cols),
                format!("{} elements", data.len()),
            ));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::Contract(format!(
                "matrix elements must be finite, found {bad}"
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Internal constructor for values known to be finite.
    fn from_parts(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        debug_assert!(data.iter().all(|v| v.is_finite()), "non-finite element");
        Matrix { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix::from_parts(rows, cols, vec![0.0; rows * cols])
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        assert!(value.is_finite(), "fill value must be finite");
        Matrix::from_parts(rows, cols, vec![value; rows * cols])
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Convenience constructor from nested rows (mostly for tests and fixtures).
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Contract("from_rows requires at least one row".into()));
        }
        let cols = rows[0].len();
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Contract("from_rows requires equal-length rows".into()));
        }
        Matrix::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    fn shape_str(&self) -> String {
        format!("{}x{}", self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Raw mutable access for crate-internal hot loops. Callers are
    /// responsible for keeping every element finite.
    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        assert!(r < self.rows && c < self.cols, "index out of bounds");
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        assert!(r < self.rows && c < self.cols, "index out of bounds");
        assert!(v.is_finite(), "matrix elements must be finite");
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        assert!(r < self.rows, "row index out of bounds");
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        assert!(r < self.rows, "row index out of bounds");
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Copies the given rows into a new matrix, in the order supplied.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix::from_parts(indices.len(), self.cols, data)
    }

    /// Standard matrix product.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::dimension("matmul", self.shape_str(), other.shape_str()));
        }
        let (m, k, n) = (self.rows, self.cols, other.cols);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let a_row = &self.data[i * k..(i + 1) * k];
            let out_row = &mut out[i * n..(i + 1) * n];
            for (p, &a_ip) in a_row.iter().enumerate() {
                if a_ip == 0.0 {
                    continue;
                }
                let b_row = &other.data[p * n..(p + 1) * n];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a_ip * b;
                }
            }
        }
        Ok(Matrix::from_parts(m, n, out))
    }

    pub fn transpose(&self) -> Matrix {
        let mut data = vec![0.0; self.data.len()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        Matrix::from_parts(self.cols, self.rows, data)
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with("add", other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with("sub", other, |a, b| a - b)
    }

    pub fn hadamard(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with("hadamard", other, |a, b| a * b)
    }

    fn zip_with(&self, op: &str, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(Error::dimension(op, self.shape_str(), other.shape_str()));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Matrix::from_parts(self.rows, self.cols, data))
    }

    pub fn scale(&self, s: f64) -> Matrix {
        self.map(|v| v * s)
    }

    /// Element-wise map; the closure must return finite values.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix::from_parts(self.rows, self.cols, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn relu(&self) -> Matrix {
        self.map(|v| if v > 0.0 { v } else { 0.0 })
    }

    pub fn sigmoid(&self) -> Matrix {
        self.map(|v| 1.0 / (1.0 + (-v).exp()))
    }

    /// Row-wise softmax with max subtraction, so arbitrarily large logits
    /// cannot overflow.
    pub fn softmax_rows(&self) -> Matrix {
        let mut data = vec![0.0; self.data.len()];
        for r in 0..self.rows {
            let row = self.row(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let out = &mut data[r * self.cols..(r + 1) * self.cols];
            let mut sum = 0.0;
            for (o, &v) in out.iter_mut().zip(row) {
                let e = (v - max).exp();
                *o = e;
                sum += e;
            }
            for o in out.iter_mut() {
                *o /= sum;
            }
        }
        Matrix::from_parts(self.rows, self.cols, data)
    }

    /// Row-wise log-softmax: z − max − ln Σ exp(z − max). Unlike taking the
    /// logarithm of [`Matrix::softmax_rows`], this stays finite even when a
    /// probability underflows to zero.
    pub fn log_softmax_rows(&self) -> Matrix {
        let mut data = vec![0.0; self.data.len()];
        for r in 0..self.rows {
            let row = self.row(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let log_sum = row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
            let out = &mut data[r * self.cols..(r + 1) * self.cols];
            for (o, &v) in out.iter_mut().zip(row) {
                *o = v - max - log_sum;
            }
        }
        Matrix::from_parts(self.rows, self.cols, data)
    }

    /// Sum across each row, returned as a column vector.
    pub fn row_sum(&self) -> Matrix {
        let data = (0..self.rows).map(|r| self.row(r).iter().sum()).collect();
        Matrix::from_parts(self.rows, 1, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    /// Independent oracle: naive triple-loop product.
    fn matmul_oracle(a: &Matrix, b: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for p in 0..a.cols() {
                    s += a.get(i, p) * b.get(p, j);
                }
                out.set(i, j, s);
            }
        }
        out
    }

    #[test]
    fn matmul_identity() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let prod = Matrix::identity(2).matmul(&a).unwrap();
        assert_eq!(prod, a);
    }

    #[test]
    fn matmul_projector() {
        let p = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![5.0, 6.0], vec![7.0, 8.0]]).unwrap();
        let out = p.matmul(&b).unwrap();
        let expected = Matrix::from_rows(&[vec![5.0, 6.0], vec![0.0, 0.0]]).unwrap();
        assert_eq!(out, expected);
    }

    #[test]
    fn matmul_matches_triple_loop_oracle() {
        let mut rng = crate::rng::stream_rng(42, 99);
        for &(m, k, n) in &[(3usize, 4usize, 2usize), (1, 1, 1), (5, 7, 3), (16, 16, 16)] {
            let a = Matrix::new(m, k, (0..m * k).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap();
            let b = Matrix::new(k, n, (0..k * n).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap();
            let fast = a.matmul(&b).unwrap();
            let slow = matmul_oracle(&a, &b);
            for (x, y) in fast.data().iter().zip(slow.data()) {
                assert_close(*x, *y, 1e-12);
            }
        }
    }

    #[test]
    fn matmul_shape_mismatch_names_both_shapes() {
        let a = Matrix::zeros(2, 3);
        let b = Matrix::zeros(2, 3);
        let err = a.matmul(&b).unwrap_err().to_string();
        assert!(err.contains("2x3"), "missing shapes in: {err}");
    }

    #[test]
    fn softmax_uniform_row() {
        let z = Matrix::zeros(1, 4);
        let p = z.softmax_rows();
        for &v in p.data() {
            assert_close(v, 0.25, 1e-15);
        }
    }

    #[test]
    fn softmax_analytic_row() {
        let z = Matrix::new(1, 2, vec![2.0f64.ln(), 0.0]).unwrap();
        let p = z.softmax_rows();
        assert_close(p.get(0, 0), 2.0 / 3.0, 1e-12);
        assert_close(p.get(0, 1), 1.0 / 3.0, 1e-12);
    }

    #[test]
    fn softmax_is_stable_for_huge_logits() {
        let z = Matrix::new(1, 2, vec![1000.0, 0.0]).unwrap();
        let p = z.softmax_rows();
        assert!(p.data().iter().all(|v| v.is_finite()));
        assert_close(p.get(0, 0), 1.0, 1e-12);
        assert!(p.get(0, 1) >= 0.0);
    }

    #[test]
    fn log_softmax_agrees_with_softmax_log() {
        let z = Matrix::from_rows(&[vec![0.3, -1.2, 2.0], vec![5.0, 5.0, 5.0]]).unwrap();
        let lp = z.log_softmax_rows();
        let p = z.softmax_rows();
        for (l, q) in lp.data().iter().zip(p.data()) {
            assert_close(*l, q.ln(), 1e-12);
        }
    }

    #[test]
    fn log_softmax_stays_finite_where_softmax_underflows() {
        let z = Matrix::new(1, 2, vec![800.0, 0.0]).unwrap();
        assert_eq!(z.softmax_rows().get(0, 1), 0.0);
        let lp = z.log_softmax_rows();
        assert!(lp.data().iter().all(|v| v.is_finite()));
        assert_close(lp.get(0, 1), -800.0, 1e-9);
    }

    #[test]
    fn sigmoid_basics() {
        let m = Matrix::new(1, 1, vec![0.0]).unwrap();
        assert_close(m.sigmoid().get(0, 0), 0.5, 1e-15);
        let mut rng = crate::rng::stream_rng(3, 1);
        for _ in 0..32 {
            let x: f64 = rng.gen_range(-8.0..8.0);
            let a = Matrix::new(1, 1, vec![x]).unwrap().sigmoid().get(0, 0);
            let b = Matrix::new(1, 1, vec![-x]).unwrap().sigmoid().get(0, 0);
            assert_close(a + b, 1.0, 1e-12);
        }
    }

    #[test]
    fn relu_clamps_negatives() {
        let m = Matrix::new(1, 2, vec![-1.0, 2.0]).unwrap().relu();
        assert_eq!(m.data(), &[0.0, 2.0]);
    }

    #[test]
    fn elementwise_and_transpose() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![5.0, 6.0], vec![7.0, 8.0]]).unwrap();
        assert_eq!(a.add(&b).unwrap().data(), &[6.0, 8.0, 10.0, 12.0]);
        assert_eq!(b.sub(&a).unwrap().data(), &[4.0, 4.0, 4.0, 4.0]);
        assert_eq!(a.hadamard(&b).unwrap().data(), &[5.0, 12.0, 21.0, 32.0]);
        assert_eq!(a.scale(2.0).data(), &[2.0, 4.0, 6.0, 8.0]);
        assert_eq!(a.transpose().data(), &[1.0, 3.0, 2.0, 4.0]);
        assert_eq!(a.row_sum().data(), &[3.0, 7.0]);
    }

    #[test]
    fn constructors_validate() {
        assert!(Matrix::new(2, 2, vec![1.0; 3]).is_err());
        assert!(Matrix::new(0, 2, vec![]).is_err());
        assert!(Matrix::new(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(Matrix::new(1, 2, vec![1.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn serde_roundtrip_validates_shape() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let json = serde_json::to_string(&m).unwrap();
        let back: Matrix = serde_json::from_str(&json).unwrap();
        assert_eq!(m, back);
        let bad = r#"{"rows":2,"cols":2,"data":[1.0,2.0,3.0]}"#;
        assert!(serde_json::from_str::<Matrix>(bad).is_err());
    }

    proptest! {
        #[test]
        fn softmax_rows_are_distributions(
            rows in 1usize..5,
            cols in 1usize..8,
            seed in 0u64..1000,
        ) {
            let mut rng = crate::rng::stream_rng(seed, 7);
            let z = Matrix::new(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-50.0..50.0)).collect()).unwrap();
            let p = z.softmax_rows();
            for r in 0..rows {
                let sum: f64 = p.row(r).iter().sum();
                prop_assert!((sum - 1.0).abs() < 1e-12);
                for &v in p.row(r) {
                    prop_assert!(v > 0.0 && v <= 1.0);
                }
            }
        }

        #[test]
        fn softmax_is_shift_invariant(
            cols in 1usize..8,
            shift in -100.0f64..100.0,
            seed in 0u64..1000,
        ) {
            let mut rng = crate::rng::stream_rng(seed, 8);
            let z = Matrix::new(1, cols, (0..cols).map(|_| rng.gen_range(-10.0..10.0)).collect()).unwrap();
            let shifted = z.map(|v| v + shift);
            let p = z.softmax_rows();
            let q = shifted.softmax_rows();
            for (a, b) in p.data().iter().zip(q.data()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}

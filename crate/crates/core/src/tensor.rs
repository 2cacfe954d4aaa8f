//! Dense row-major 2-D `f64` tensor. Vectors are 1-row tensors.

use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;

use crate::math;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "tensor data length mismatch");
        Tensor { rows, cols, data }
    }

    /// 1 x n row vector.
    pub fn row_vec(data: Vec<f64>) -> Self {
        let cols = data.len();
        Tensor {
            rows: 1,
            cols,
            data,
        }
    }

    pub fn uniform<R: Rng + ?Sized>(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut R) -> Self {
        let data = (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect();
        Tensor { rows, cols, data }
    }

    pub fn normal<R: Rng + ?Sized>(rows: usize, cols: usize, mean: f64, sd: f64, rng: &mut R) -> Self {
        use rand_distr::{Distribution, Normal};
        let dist = Normal::new(mean, sd).expect("valid normal parameters");
        let data = (0..rows * cols).map(|_| dist.sample(rng)).collect();
        Tensor { rows, cols, data }
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
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_tensor(&self, r: usize) -> Tensor {
        Tensor::row_vec(self.row(r).to_vec())
    }

    pub fn set_row(&mut self, r: usize, values: &[f64]) {
        assert_eq!(values.len(), self.cols);
        self.data[r * self.cols..(r + 1) * self.cols].copy_from_slice(values);
    }

    pub fn same_shape(&self, other: &Tensor) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    pub fn matmul(&self, other: &Tensor) -> Tensor {
        assert_eq!(
            self.cols, other.rows,
            "matmul shape mismatch: {}x{} . {}x{}",
            self.rows, self.cols, other.rows, other.cols
        );
        let mut out = Tensor::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let orow = &other.data[k * other.cols..(k + 1) * other.cols];
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, &b) in dst.iter_mut().zip(orow.iter()) {
                    *d += a * b;
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Tensor {
        let mut out = Tensor::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        assert!(self.same_shape(other), "elementwise shape mismatch");
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn add(&self, other: &Tensor) -> Tensor {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Tensor {
        self.zip(other, |a, b| a - b)
    }

    pub fn mul_elem(&self, other: &Tensor) -> Tensor {
        self.zip(other, |a, b| a * b)
    }

    pub fn scale(&self, k: f64) -> Tensor {
        self.map(|x| k * x)
    }

    /// Add a 1 x n row vector to every row.
    pub fn add_row(&self, row: &Tensor) -> Tensor {
        assert_eq!(row.rows, 1);
        assert_eq!(row.cols, self.cols);
        let mut out = self.clone();
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[r * self.cols + c] += row.data[c];
            }
        }
        out
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        assert!(self.same_shape(other));
        for (a, &b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += b;
        }
    }

    pub fn concat_cols(&self, other: &Tensor) -> Tensor {
        assert_eq!(self.rows, other.rows, "concat_cols row mismatch");
        let cols = self.cols + other.cols;
        let mut out = Tensor::zeros(self.rows, cols);
        for r in 0..self.rows {
            out.data[r * cols..r * cols + self.cols].copy_from_slice(self.row(r));
            out.data[r * cols + self.cols..(r + 1) * cols].copy_from_slice(other.row(r));
        }
        out
    }

    pub fn slice_cols(&self, start: usize, len: usize) -> Tensor {
        assert!(start + len <= self.cols, "slice_cols out of range");
        let mut out = Tensor::zeros(self.rows, len);
        for r in 0..self.rows {
            out.data[r * len..(r + 1) * len]
                .copy_from_slice(&self.data[r * self.cols + start..r * self.cols + start + len]);
        }
        out
    }

    /// Subtract a 1 x n row vector from every row.
    pub fn sub_row(&self, row: &Tensor) -> Tensor {
        assert_eq!(row.rows, 1);
        assert_eq!(row.cols, self.cols);
        let mut out = self.clone();
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[r * self.cols + c] -= row.data[c];
            }
        }
        out
    }

    /// Multiply every row elementwise by a 1 x n row vector.
    pub fn mul_row(&self, row: &Tensor) -> Tensor {
        assert_eq!(row.rows, 1);
        assert_eq!(row.cols, self.cols);
        let mut out = self.clone();
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[r * self.cols + c] *= row.data[c];
            }
        }
        out
    }

    /// Divide every row elementwise by a 1 x n row vector.
    pub fn div_row(&self, row: &Tensor) -> Tensor {
        assert_eq!(row.rows, 1);
        assert_eq!(row.cols, self.cols);
        let mut out = self.clone();
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[r * self.cols + c] /= row.data[c];
            }
        }
        out
    }

    /// Column means: m x n -> 1 x n.
    pub fn mean_rows(&self) -> Tensor {
        let m = self.rows as f64;
        let mut out = Tensor::zeros(1, self.cols);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c] += self.data[r * self.cols + c] / m;
            }
        }
        out
    }

    pub fn sigmoid(&self) -> Tensor {
        self.map(math::sigmoid)
    }

    pub fn tanh(&self) -> Tensor {
        self.map(math::tanh)
    }

    pub fn relu(&self) -> Tensor {
        self.map(|x| if x > 0.0 { x } else { 0.0 })
    }

    pub fn sqrt_shift(&self, shift: f64) -> Tensor {
        self.map(|x| math::sqrt(x + shift))
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|&x| x * x).sum()
    }

    pub fn norm(&self) -> f64 {
        math::sqrt(self.norm_sq())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Euclidean distance between two rows of (possibly different) tensors.
    pub fn row_distance(a: &Tensor, ra: usize, b: &Tensor, rb: usize) -> f64 {
        assert_eq!(a.cols, b.cols);
        let x = a.row(ra);
        let y = b.row(rb);
        let mut s = 0.0;
        for i in 0..x.len() {
            let d = x[i] - y[i];
            s += d * d;
        }
        math::sqrt(s)
    }
}

/// Stack tensors vertically in order.
pub fn stack_rows(parts: &[&Tensor]) -> Tensor {
    assert!(!parts.is_empty());
    let cols = parts[0].cols;
    let rows: usize = parts.iter().map(|p| p.rows).sum();
    let mut out = Tensor::zeros(rows, cols);
    let mut r = 0;
    for p in parts {
        assert_eq!(p.cols, cols, "stack_rows column mismatch");
        for pr in 0..p.rows {
            out.set_row(r, p.row(pr));
            r += 1;
        }
    }
    out
}

/// Gather rows of a table by index.
pub fn gather_rows(table: &Tensor, indices: &[usize]) -> Tensor {
    let mut out = Tensor::zeros(indices.len(), table.cols());
    for (r, &i) in indices.iter().enumerate() {
        out.set_row(r, table.row(i));
    }
    out
}

/// Index of the maximum entry; the first index wins ties. Decoding relies on
/// this tie rule being identical everywhere.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, &v) in values.iter().enumerate() {
        if v > best_v {
            best_v = v;
            best = i;
        }
    }
    best
}

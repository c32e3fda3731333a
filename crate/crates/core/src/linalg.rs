//! Small dense square matrices used for kernels, intensity matrices and
//! transition-count matrices.
//!
//! Compartment counts are small (tens at most), so a row-major `Vec` beats a
//! general linear-algebra dependency on both speed and reproducibility: every
//! reduction here runs in a fixed order.

use serde::{Deserialize, Serialize};
use std::ops::{Index, IndexMut};

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SquareMatrix<T> {
    dim: usize,
    data: Vec<T>,
}

/// Real-valued square matrix (kernels, intensities).
pub type Matrix = SquareMatrix<f64>;
/// Integer square matrix (transition counts, incidence observations).
pub type CountMatrix = SquareMatrix<u64>;

impl<T: Copy + Default> SquareMatrix<T> {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![T::default(); dim * dim],
        }
    }

    /// Builds a matrix from row-major data. Panics if the length is not `dim²`.
    pub fn from_row_major(dim: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), dim * dim, "row-major data must have dim² entries");
        Self { dim, data }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for row in rows {
            assert_eq!(row.len(), dim, "matrix must be square");
            data.extend_from_slice(row);
        }
        Self { dim, data }
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                data.push(f(i, j));
            }
        }
        Self { dim, data }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn map<U: Copy + Default>(&self, f: impl Fn(T) -> U) -> SquareMatrix<U> {
        SquareMatrix {
            dim: self.dim,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Writes `block` into the diagonal block starting at `(offset, offset)`.
    pub fn set_block(&mut self, offset: usize, block: &SquareMatrix<T>) {
        for i in 0..block.dim {
            let dst = (offset + i) * self.dim + offset;
            self.data[dst..dst + block.dim].copy_from_slice(block.row(i));
        }
    }

    /// Copies out the diagonal block of size `size` starting at `(offset, offset)`.
    pub fn block(&self, offset: usize, size: usize) -> SquareMatrix<T> {
        SquareMatrix::from_fn(size, |i, j| self[(offset + i, offset + j)])
    }
}

impl Matrix {
    pub fn identity(dim: usize) -> Self {
        Self::from_fn(dim, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.row(i).iter().sum()).collect()
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for i in 0..self.dim {
            for (o, v) in out.iter_mut().zip(self.row(i)) {
                *o += v;
            }
        }
        out
    }

    pub fn column_sum(&self, j: usize) -> f64 {
        (0..self.dim).map(|i| self.data[i * self.dim + j]).sum()
    }

    pub fn total(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Row vector times matrix: `vᵀ A`, returned as a column vector.
    pub fn left_mul(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.dim);
        let mut out = vec![0.0; self.dim];
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += vi * a;
            }
        }
        out
    }

    /// Matrix times column vector: `A v`.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.dim);
        (0..self.dim)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.dim, other.dim);
        let mut out = Matrix::zeros(self.dim);
        for i in 0..self.dim {
            for k in 0..self.dim {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..self.dim {
                    out.data[i * self.dim + j] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl CountMatrix {
    pub fn row_sums(&self) -> Vec<u64> {
        (0..self.dim).map(|i| self.row(i).iter().sum()).collect()
    }

    pub fn column_sums(&self) -> Vec<u64> {
        let mut out = vec![0; self.dim];
        for i in 0..self.dim {
            for (o, v) in out.iter_mut().zip(self.row(i)) {
                *o += v;
            }
        }
        out
    }

    pub fn to_real(&self) -> Matrix {
        self.map(|v| v as f64)
    }

    pub fn add_assign(&mut self, other: &CountMatrix) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

impl<T> Index<(usize, usize)> for SquareMatrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.dim + j]
    }
}

impl<T> IndexMut<(usize, usize)> for SquareMatrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.dim + j]
    }
}

/// Sup-norm distance between two vectors.
pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

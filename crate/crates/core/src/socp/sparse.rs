//! Minimal compressed-sparse-column storage.

use crate::model::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct CscMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub colptr: Vec<usize>,
    pub rowind: Vec<usize>,
    pub values: Vec<f64>,
}

impl CscMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            colptr: vec![0; ncols + 1],
            rowind: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds from `(row, col, value)` triplets, summing duplicates. Explicit
    /// zeros are kept so that structure does not depend on values.
    pub fn from_triplets(nrows: usize, ncols: usize, entries: &[(usize, usize, f64)]) -> Self {
        let mut sorted: Vec<(usize, usize, f64)> = entries.to_vec();
        sorted.sort_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));
        let mut colptr = vec![0usize; ncols + 1];
        let mut rowind: Vec<usize> = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for &(i, j, v) in &sorted {
            assert!(i < nrows && j < ncols, "triplet ({i}, {j}) out of bounds");
            if last == Some((i, j)) {
                *values.last_mut().expect("duplicate follows an entry") += v;
                continue;
            }
            rowind.push(i);
            values.push(v);
            colptr[j + 1] += 1;
            last = Some((i, j));
        }
        for j in 0..ncols {
            colptr[j + 1] += colptr[j];
        }
        Self {
            nrows,
            ncols,
            colptr,
            rowind,
            values,
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.ncols).flat_map(move |j| {
            (self.colptr[j]..self.colptr[j + 1]).map(move |p| (self.rowind[p], j, self.values[p]))
        })
    }

    /// `y += alpha * A x`
    pub fn mul_add(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for j in 0..self.ncols {
            let xj = alpha * x[j];
            if xj == 0.0 {
                continue;
            }
            for p in self.colptr[j]..self.colptr[j + 1] {
                y[self.rowind[p]] += self.values[p] * xj;
            }
        }
    }

    /// `y += alpha * A^T x`
    pub fn tr_mul_add(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.nrows);
        debug_assert_eq!(y.len(), self.ncols);
        for j in 0..self.ncols {
            let mut acc = 0.0;
            for p in self.colptr[j]..self.colptr[j + 1] {
                acc += self.values[p] * x[self.rowind[p]];
            }
            y[j] += alpha * acc;
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_add(1.0, x, &mut y);
        y
    }

    /// `y = self * x`, overwriting `y`.
    pub fn mul_into(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        self.mul_add(1.0, x, y);
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.triplets() {
            m[(i, j)] += v;
        }
        m
    }

    /// Stack `self` on top of `other`.
    pub fn vstack(&self, other: &CscMatrix) -> CscMatrix {
        assert_eq!(self.ncols, other.ncols);
        let mut t: Vec<(usize, usize, f64)> = self.triplets().collect();
        t.extend(other.triplets().map(|(i, j, v)| (i + self.nrows, j, v)));
        CscMatrix::from_triplets(self.nrows + other.nrows, self.ncols, &t)
    }

    pub fn transpose(&self) -> CscMatrix {
        let t: Vec<(usize, usize, f64)> = self.triplets().map(|(i, j, v)| (j, i, v)).collect();
        CscMatrix::from_triplets(self.ncols, self.nrows, &t)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        if self.nrows != self.ncols {
            return false;
        }
        let t = self.transpose();
        let scale = 1.0 + self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut diff: Vec<(usize, usize, f64)> = self.triplets().collect();
        diff.extend(t.triplets().map(|(i, j, v)| (i, j, -v)));
        CscMatrix::from_triplets(self.nrows, self.ncols, &diff)
            .values
            .iter()
            .all(|v| v.abs() <= tol * scale)
    }

    pub fn same_pattern(&self, other: &CscMatrix) -> bool {
        self.nrows == other.nrows
            && self.ncols == other.ncols
            && self.colptr == other.colptr
            && self.rowind == other.rowind
    }
}

/// Triplet accumulator used while assembling programs.
#[derive(Debug, Clone, Default)]
pub struct Triplets {
    pub entries: Vec<(usize, usize, f64)>,
}

impl Triplets {
    pub fn push(&mut self, i: usize, j: usize, v: f64) {
        self.entries.push((i, j, v));
    }

    /// Adds the nonzero entries of a dense block at `(row, col)`, scaled.
    pub fn push_block(&mut self, row: usize, col: usize, block: &Matrix, scale: f64) {
        for j in 0..block.ncols() {
            for i in 0..block.nrows() {
                let v = block[(i, j)];
                if v != 0.0 {
                    self.entries.push((row + i, col + j, scale * v));
                }
            }
        }
    }

    /// Adds `scale * I_n` at `(row, col)`, keeping the entries even when `scale == 0`.
    pub fn push_identity(&mut self, row: usize, col: usize, n: usize, scale: f64) {
        for i in 0..n {
            self.entries.push((row + i, col + i, scale));
        }
    }

    pub fn build(&self, nrows: usize, ncols: usize) -> CscMatrix {
        CscMatrix::from_triplets(nrows, ncols, &self.entries)
    }
}

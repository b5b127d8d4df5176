//! Sparse `L D L^T` factorisation of quasi-definite matrices without pivoting.
//!
//! Up-looking algorithm driven by the elimination tree. The input is the
//! upper triangle (diagonal included) of a symmetric matrix in CSC form.

use crate::error::{Error, Result};

use super::sparse::CscMatrix;

const NONE: usize = usize::MAX;

#[derive(Debug, Clone)]
pub struct LdlFactor {
    n: usize,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
    dinv: Vec<f64>,
}

/// Elimination tree and column counts of `L`.
fn etree(upper: &CscMatrix) -> Result<(Vec<usize>, Vec<usize>)> {
    let n = upper.ncols;
    let mut work = vec![NONE; n];
    let mut lnz = vec![0usize; n];
    let mut parent = vec![NONE; n];
    for j in 0..n {
        work[j] = j;
        for p in upper.colptr[j]..upper.colptr[j + 1] {
            let mut i = upper.rowind[p];
            if i > j {
                return Err(Error::Numerical("LDL input is not upper triangular".into()));
            }
            while work[i] != j {
                if parent[i] == NONE {
                    parent[i] = j;
                }
                lnz[i] += 1;
                work[i] = j;
                i = parent[i];
            }
        }
    }
    Ok((parent, lnz))
}

impl LdlFactor {
    pub fn new(upper: &CscMatrix) -> Result<Self> {
        let n = upper.ncols;
        let (parent, lnz) = etree(upper)?;
        let mut lp = vec![0usize; n + 1];
        for i in 0..n {
            lp[i + 1] = lp[i] + lnz[i];
        }
        let total = lp[n];
        let mut li = vec![0usize; total];
        let mut lx = vec![0.0; total];
        let mut d = vec![0.0; n];
        let mut dinv = vec![0.0; n];

        let mut y_vals = vec![0.0; n];
        let mut y_marked = vec![false; n];
        let mut y_idx = vec![0usize; n];
        let mut elim = vec![0usize; n];
        let mut next_in_col: Vec<usize> = lp[..n].to_vec();

        for k in 0..n {
            let mut nnz_y = 0;
            let mut has_diag = false;
            for p in upper.colptr[k]..upper.colptr[k + 1] {
                let b = upper.rowind[p];
                if b == k {
                    d[k] = upper.values[p];
                    has_diag = true;
                    continue;
                }
                y_vals[b] = upper.values[p];
                if y_marked[b] {
                    continue;
                }
                // Walk up the elimination tree to find the nonzero pattern of row k.
                y_marked[b] = true;
                elim[0] = b;
                let mut n_elim = 1;
                let mut next = parent[b];
                while next != NONE && next < k {
                    if y_marked[next] {
                        break;
                    }
                    y_marked[next] = true;
                    elim[n_elim] = next;
                    n_elim += 1;
                    next = parent[next];
                }
                while n_elim > 0 {
                    n_elim -= 1;
                    y_idx[nnz_y] = elim[n_elim];
                    nnz_y += 1;
                }
            }
            if !has_diag {
                d[k] = 0.0;
            }
            for t in (0..nnz_y).rev() {
                let c = y_idx[t];
                let slot = next_in_col[c];
                let yc = y_vals[c];
                for q in lp[c]..slot {
                    y_vals[li[q]] -= lx[q] * yc;
                }
                li[slot] = k;
                lx[slot] = yc * dinv[c];
                d[k] -= yc * lx[slot];
                next_in_col[c] += 1;
                y_vals[c] = 0.0;
                y_marked[c] = false;
            }
            if d[k] == 0.0 || !d[k].is_finite() {
                return Err(Error::Numerical(format!("zero or non-finite pivot at {k}")));
            }
            dinv[k] = 1.0 / d[k];
        }
        Ok(Self {
            n,
            lp,
            li,
            lx,
            d,
            dinv,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz_l(&self) -> usize {
        self.lx.len()
    }

    pub fn positive_pivots(&self) -> usize {
        self.d.iter().filter(|&&v| v > 0.0).count()
    }

    /// Solves `L D L^T x = b` in place.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        for i in 0..self.n {
            let xi = x[i];
            for p in self.lp[i]..self.lp[i + 1] {
                x[self.li[p]] -= self.lx[p] * xi;
            }
        }
        for i in 0..self.n {
            x[i] *= self.dinv[i];
        }
        for i in (0..self.n).rev() {
            let mut acc = x[i];
            for p in self.lp[i]..self.lp[i + 1] {
                acc -= self.lx[p] * x[self.li[p]];
            }
            x[i] = acc;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Matrix, Vector};

    fn upper_of(m: &Matrix) -> CscMatrix {
        let mut t = Vec::new();
        for j in 0..m.ncols() {
            for i in 0..=j {
                if m[(i, j)] != 0.0 || i == j {
                    t.push((i, j, m[(i, j)]));
                }
            }
        }
        CscMatrix::from_triplets(m.nrows(), m.ncols(), &t)
    }

    #[test]
    fn solves_quasi_definite_system() {
        #[rustfmt::skip]
        let k = Matrix::from_row_slice(5, 5, &[
            4.0, 1.0, 0.0, 1.0, 0.0,
            1.0, 3.0, 0.5, 0.0, 2.0,
            0.0, 0.5, 2.0, 0.0, 1.0,
            1.0, 0.0, 0.0, -1.0, 0.0,
            0.0, 2.0, 1.0, 0.0, -0.5,
        ]);
        let f = LdlFactor::new(&upper_of(&k)).unwrap();
        assert_eq!(f.positive_pivots(), 3);
        let b = Vector::from_row_slice(&[1.0, -2.0, 0.5, 3.0, 1.0]);
        let mut x = b.as_slice().to_vec();
        f.solve_in_place(&mut x);
        let r = &k * Vector::from_row_slice(&x) - &b;
        assert!(r.amax() < 1e-12, "residual {}", r.amax());
    }

    #[test]
    fn arrow_matrix_fill() {
        // Dense last row and column: no fill beyond the arrow.
        let n = 6;
        let mut k = Matrix::identity(n, n) * 3.0;
        for i in 0..n - 1 {
            k[(i, n - 1)] = 1.0;
            k[(n - 1, i)] = 1.0;
        }
        let f = LdlFactor::new(&upper_of(&k)).unwrap();
        assert_eq!(f.nnz_l(), n - 1);
    }

    #[test]
    fn singular_pivot_is_reported() {
        let k = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!(LdlFactor::new(&upper_of(&k)).is_err());
    }
}

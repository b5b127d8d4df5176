//! Factorised quasi-definite KKT system used by the ADMM iteration.
//!
//! ```text
//! [ P + sigma I   A^T      G^T  ] [x]   [r1]
//! [ A            -I/rho    0    ] [mu] = [r2]
//! [ G             0       -eps I] [nu]   [r3]
//! ```
//!
//! The `-eps I` block regularises the equality rows; iterative refinement
//! against the unregularised matrix removes its effect from the solution.

use crate::error::{Error, Result};

use super::ldl::LdlFactor;
use super::sparse::CscMatrix;

const EQ_REGULARISATION: f64 = 1e-10;
const REFINE_STEPS: usize = 4;
const REFINE_TOL: f64 = 1e-14;

#[derive(Debug, Clone)]
pub struct KktSystem {
    n: usize,
    m: usize,
    p: usize,
    upper: CscMatrix,
    perm: Vec<usize>,
    factor: LdlFactor,
}

fn push_upper(t: &mut Vec<(usize, usize, f64)>, i: usize, j: usize, v: f64) {
    if i <= j {
        t.push((i, j, v));
    } else {
        t.push((j, i, v));
    }
}

impl KktSystem {
    pub fn new(p_full: &CscMatrix, a: &CscMatrix, g: &CscMatrix, sigma: f64, rho: f64) -> Result<Self> {
        let n = p_full.ncols;
        let m = a.nrows;
        let pe = g.nrows;
        let nk = n + m + pe;
        let mut t: Vec<(usize, usize, f64)> = Vec::with_capacity(p_full.nnz() + a.nnz() + g.nnz() + nk);
        for (i, j, v) in p_full.triplets() {
            if i <= j {
                t.push((i, j, v));
            }
        }
        for i in 0..n {
            t.push((i, i, sigma));
        }
        for (i, j, v) in a.triplets() {
            t.push((j, n + i, v));
        }
        for i in 0..m {
            t.push((n + i, n + i, -1.0 / rho));
        }
        for (i, j, v) in g.triplets() {
            t.push((j, n + m + i, v));
        }
        for i in 0..pe {
            t.push((n + m + i, n + m + i, -EQ_REGULARISATION));
        }
        let upper = CscMatrix::from_triplets(nk, nk, &t);

        let (perm, pinv) = if nk == 0 {
            (Vec::new(), Vec::new())
        } else {
            let (perm, pinv, _info) = amd::order(nk, &upper.colptr, &upper.rowind, &amd::Control::default())
                .map_err(|s| Error::Numerical(format!("AMD ordering failed: {s:?}")))?;
            (perm, pinv)
        };
        let mut tp = Vec::with_capacity(upper.nnz());
        for (i, j, v) in upper.triplets() {
            push_upper(&mut tp, pinv[i], pinv[j], v);
        }
        let permuted = CscMatrix::from_triplets(nk, nk, &tp);
        let factor = LdlFactor::new(&permuted)?;
        if factor.positive_pivots() != n {
            return Err(Error::Numerical(format!(
                "KKT matrix is not quasi-definite: {} positive pivots, expected {n}",
                factor.positive_pivots()
            )));
        }
        Ok(Self {
            n,
            m,
            p: pe,
            upper,
            perm,
            factor,
        })
    }

    pub fn dim(&self) -> usize {
        self.n + self.m + self.p
    }

    pub fn nnz_factor(&self) -> usize {
        self.factor.nnz_l()
    }

    fn solve_regularised(&self, b: &[f64], x: &mut [f64], work: &mut [f64]) {
        for (k, &pk) in self.perm.iter().enumerate() {
            work[k] = b[pk];
        }
        self.factor.solve_in_place(work);
        for (k, &pk) in self.perm.iter().enumerate() {
            x[pk] = work[k];
        }
    }

    /// `y = K0 x` with the unregularised matrix.
    fn apply_exact(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        let u = &self.upper;
        for j in 0..u.ncols {
            for q in u.colptr[j]..u.colptr[j + 1] {
                let i = u.rowind[q];
                let v = u.values[q];
                y[i] += v * x[j];
                if i != j {
                    y[j] += v * x[i];
                }
            }
        }
        let off = self.n + self.m;
        for i in 0..self.p {
            y[off + i] += EQ_REGULARISATION * x[off + i];
        }
    }

    /// Solves the unregularised system; `x` receives the solution.
    pub fn solve(&self, b: &[f64], x: &mut [f64]) {
        let mut scratch = KktScratch::new(self.dim());
        self.solve_with_scratch(b, x, &mut scratch);
    }

    /// As [`KktSystem::solve`], reusing the caller's buffers.
    pub fn solve_with_scratch(&self, b: &[f64], x: &mut [f64], scratch: &mut KktScratch) {
        let nk = self.dim();
        scratch.resize(nk);
        let KktScratch { work, r, dx } = scratch;
        self.solve_regularised(b, x, work);
        if self.p == 0 {
            return;
        }
        let bmax = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for _ in 0..REFINE_STEPS {
            self.apply_exact(x, r);
            let mut rmax: f64 = 0.0;
            for i in 0..nk {
                r[i] = b[i] - r[i];
                rmax = rmax.max(r[i].abs());
            }
            if rmax <= REFINE_TOL * (1.0 + bmax) {
                break;
            }
            self.solve_regularised(r, dx, work);
            for i in 0..nk {
                x[i] += dx[i];
            }
        }
    }
}

/// Work buffers for [`KktSystem::solve_with_scratch`].
#[derive(Debug, Clone, Default)]
pub struct KktScratch {
    work: Vec<f64>,
    r: Vec<f64>,
    dx: Vec<f64>,
}

impl KktScratch {
    pub fn new(dim: usize) -> Self {
        let mut s = Self::default();
        s.resize(dim);
        s
    }

    fn resize(&mut self, dim: usize) {
        for v in [&mut self.work, &mut self.r, &mut self.dx] {
            v.resize(dim, 0.0);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Matrix, Vector};

    #[test]
    fn refined_solution_satisfies_equalities() {
        let p = CscMatrix::from_triplets(3, 3, &[(0, 0, 2.0), (1, 1, 1.0), (0, 1, 0.5), (1, 0, 0.5), (2, 2, 0.0)]);
        let a = CscMatrix::from_triplets(2, 3, &[(0, 0, 1.0), (1, 2, 1.0), (1, 1, -1.0)]);
        let g = CscMatrix::from_triplets(1, 3, &[(0, 0, 1.0), (0, 1, 1.0), (0, 2, 1.0)]);
        let (sigma, rho) = (1e-6, 0.1);
        let kkt = KktSystem::new(&p, &a, &g, sigma, rho).unwrap();
        let b = [1.0, -1.0, 0.3, 0.2, -0.4, 2.0];
        let mut x = vec![0.0; 6];
        kkt.solve(&b, &mut x);

        let mut k = Matrix::zeros(6, 6);
        let pd = p.to_dense();
        let ad = a.to_dense();
        let gd = g.to_dense();
        k.view_mut((0, 0), (3, 3)).copy_from(&(pd + Matrix::identity(3, 3) * sigma));
        k.view_mut((0, 3), (3, 2)).copy_from(&ad.transpose());
        k.view_mut((3, 0), (2, 3)).copy_from(&ad);
        k.view_mut((0, 5), (3, 1)).copy_from(&gd.transpose());
        k.view_mut((5, 0), (1, 3)).copy_from(&gd);
        k[(3, 3)] = -1.0 / rho;
        k[(4, 4)] = -1.0 / rho;
        let r = &k * Vector::from_row_slice(&x) - Vector::from_row_slice(&b);
        assert!(r.amax() < 1e-12, "residual {}", r.amax());
        assert!((x[0] + x[1] + x[2] - 2.0).abs() < 1e-13);
    }
}

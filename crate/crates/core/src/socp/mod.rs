//! Sparse convex quadratic programs with box and second-order-cone constraints.
//!
//! ```text
//! minimise    1/2 z'Pz + q'z + c
//! subject to  G z = g
//!             lo <= M z <= hi
//!             C z + d  in  SOC(d_1) x ... x SOC(d_m)
//! ```
//!
//! Dual variables follow the normal-cone convention
//! `P z + q + M'y_box + C'y_cone + G'nu = 0`, with `y_cone` in the polar cone.

mod admm;
mod cone;
mod generate;
mod kkt;
mod ldl;
mod oracle;
mod sparse;

pub use admm::{admm_solve, AdmmSolver, ProgramData, WarmStart};
pub use cone::{project_soc, project_soc_polar, soc_margin, ConeSet};
pub use generate::{random_program, RandomProgramSpec};
pub use kkt::{KktScratch, KktSystem};
pub use ldl::LdlFactor;
pub use oracle::{oracle_solve, OracleConfig, ORACLE_MAX_VARS};
pub use sparse::{CscMatrix, Triplets};

use std::hash::{Hash, Hasher};

use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone)]
pub struct ConicProgram {
    pub n: usize,
    /// Full symmetric Hessian.
    pub p: CscMatrix,
    pub q: Vec<f64>,
    pub constant: f64,
    pub eq_matrix: CscMatrix,
    pub eq_rhs: Vec<f64>,
    pub box_matrix: CscMatrix,
    pub box_lo: Vec<f64>,
    pub box_hi: Vec<f64>,
    pub cone_matrix: CscMatrix,
    pub cone_offset: Vec<f64>,
    pub cone_dims: Vec<usize>,
}

impl ConicProgram {
    /// An unconstrained program in `n` variables with zero cost.
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            p: CscMatrix::zeros(n, n),
            q: vec![0.0; n],
            constant: 0.0,
            eq_matrix: CscMatrix::zeros(0, n),
            eq_rhs: Vec::new(),
            box_matrix: CscMatrix::zeros(0, n),
            box_lo: Vec::new(),
            box_hi: Vec::new(),
            cone_matrix: CscMatrix::zeros(0, n),
            cone_offset: Vec::new(),
            cone_dims: Vec::new(),
        }
    }

    pub fn n_eq(&self) -> usize {
        self.eq_matrix.nrows
    }

    pub fn n_box(&self) -> usize {
        self.box_matrix.nrows
    }

    pub fn n_cone_rows(&self) -> usize {
        self.cone_matrix.nrows
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n;
        check_len("Hessian rows", n, self.p.nrows)?;
        check_len("Hessian columns", n, self.p.ncols)?;
        check_len("linear cost", n, self.q.len())?;
        check_len("equality columns", n, self.eq_matrix.ncols)?;
        check_len("equality rhs", self.eq_matrix.nrows, self.eq_rhs.len())?;
        check_len("box columns", n, self.box_matrix.ncols)?;
        check_len("box lower bounds", self.box_matrix.nrows, self.box_lo.len())?;
        check_len("box upper bounds", self.box_matrix.nrows, self.box_hi.len())?;
        check_len("cone columns", n, self.cone_matrix.ncols)?;
        check_len("cone offset", self.cone_matrix.nrows, self.cone_offset.len())?;
        check_len("cone rows", self.cone_matrix.nrows, self.cone_dims.iter().sum())?;
        if self.cone_dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidArgument("cone of dimension zero".into()));
        }
        for (i, (&l, &h)) in self.box_lo.iter().zip(&self.box_hi).enumerate() {
            if l.is_nan() || h.is_nan() || l > h {
                return Err(Error::InvalidArgument(format!("box row {i} has bounds [{l}, {h}]")));
            }
        }
        if !self.p.is_symmetric(1e-12) {
            return Err(Error::InvalidArgument("Hessian is not symmetric".into()));
        }
        Ok(())
    }

    pub fn objective(&self, z: &[f64]) -> f64 {
        let pz = self.p.mul(z);
        0.5 * dot(z, &pz) + dot(&self.q, z) + self.constant
    }

    pub fn cone_set(&self) -> ConeSet {
        ConeSet {
            lo: self.box_lo.clone(),
            hi: self.box_hi.clone(),
            soc_dims: self.cone_dims.clone(),
        }
    }

    /// Hash of dimensions and sparsity patterns of all matrices.
    pub fn pattern_fingerprint(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.n.hash(&mut h);
        for m in [&self.p, &self.eq_matrix, &self.box_matrix, &self.cone_matrix] {
            m.nrows.hash(&mut h);
            m.colptr.hash(&mut h);
            m.rowind.hash(&mut h);
        }
        self.cone_dims.hash(&mut h);
        h.finish()
    }

    /// Stacked inequality map `[M; C]` and offset `[0; d]`.
    pub(crate) fn stacked(&self) -> (CscMatrix, Vec<f64>) {
        let a = self.box_matrix.vstack(&self.cone_matrix);
        let mut d = vec![0.0; self.n_box()];
        d.extend_from_slice(&self.cone_offset);
        (a, d)
    }

    /// Optimality residuals of a candidate primal-dual point, all in the infinity norm.
    pub fn kkt_residuals(&self, sol: &Solution) -> KktResiduals {
        let z = &sol.z;
        let nb = self.n_box();
        let (a, d) = self.stacked();
        let mut w = a.mul(z);
        for (wi, di) in w.iter_mut().zip(&d) {
            *wi += di;
        }
        let k = self.cone_set();
        let mut eq = self.eq_matrix.mul(z);
        for (e, g) in eq.iter_mut().zip(&self.eq_rhs) {
            *e -= g;
        }
        let mut grad = self.p.mul(z);
        for (gi, qi) in grad.iter_mut().zip(&self.q) {
            *gi += qi;
        }
        a.tr_mul_add(1.0, &sol.y, &mut grad);
        self.eq_matrix.tr_mul_add(1.0, &sol.nu, &mut grad);

        let mut dual_infeas: f64 = 0.0;
        let mut compl: f64 = 0.0;
        for i in 0..nb {
            let y = sol.y[i];
            if y > 0.0 {
                compl = compl.max(y * (self.box_hi[i] - w[i]).abs());
            } else if y < 0.0 {
                compl = compl.max(-y * (w[i] - self.box_lo[i]).abs());
            }
        }
        let mut off = nb;
        for &dim in &self.cone_dims {
            let yc: Vec<f64> = sol.y[off..off + dim].iter().map(|v| -v).collect();
            dual_infeas = dual_infeas.max(-soc_margin(&yc));
            compl = compl.max(dot(&sol.y[off..off + dim], &w[off..off + dim]).abs());
            off += dim;
        }
        KktResiduals {
            equality: inf_norm(&eq),
            inequality: k.violation(&w),
            stationarity: inf_norm(&grad),
            dual_infeasibility: dual_infeas,
            complementarity: compl,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    pub equality: f64,
    pub inequality: f64,
    pub stationarity: f64,
    pub dual_infeasibility: f64,
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.equality
            .max(self.inequality)
            .max(self.stationarity)
            .max(self.dual_infeasibility)
            .max(self.complementarity)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolveStatus {
    Solved,
    MaxIterations,
    InfeasibleSuspected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub rho: f64,
    pub sigma: f64,
    pub alpha: f64,
    /// Absolute tolerance on the primal and dual residuals.
    pub tol: f64,
    /// Relative tolerance on the dual residual; zero gives a purely absolute test.
    pub rel_tol: f64,
    pub max_iter: usize,
    pub check_interval: usize,
    /// Tighten the inequality sets so that a solved iterate meets the
    /// original constraints exactly.
    pub strict: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rho: 150.0,
            sigma: 1e-6,
            alpha: 1.6,
            tol: 1e-4,
            rel_tol: 0.0,
            max_iter: 20_000,
            check_interval: 5,
            strict: false,
        }
    }
}

impl SolverConfig {
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    /// Amount by which strict mode shrinks box rows on each side.
    pub fn box_backoff(&self) -> f64 {
        if self.strict {
            2.0 * self.tol
        } else {
            0.0
        }
    }

    /// Amount by which strict mode moves each cone inward along its axis.
    pub fn cone_backoff(&self) -> f64 {
        if self.strict {
            4.0 * self.tol
        } else {
            0.0
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.rho > 0.0
            && self.sigma > 0.0
            && self.alpha > 0.0
            && self.alpha < 2.0
            && self.tol > 0.0
            && self.rel_tol >= 0.0
            && self.max_iter > 0
            && self.check_interval > 0;
        if !ok {
            return Err(Error::InvalidArgument(format!("invalid solver settings {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub z: Vec<f64>,
    /// Multipliers of the stacked inequality rows, box rows first.
    pub y: Vec<f64>,
    pub nu: Vec<f64>,
    pub status: SolveStatus,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub objective: f64,
}

impl Solution {
    pub fn y_box(&self, prog: &ConicProgram) -> &[f64] {
        &self.y[..prog.n_box()]
    }

    pub fn y_cone(&self, prog: &ConicProgram) -> &[f64] {
        &self.y[prog.n_box()..]
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

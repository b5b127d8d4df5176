//! Dense log-barrier interior-point solver used as an accuracy reference.

use nalgebra::linalg::{SVD, LU};

use crate::error::{Error, Result};
use crate::model::{Matrix, Vector};

use super::{ConicProgram, Solution, SolveStatus};

pub const ORACLE_MAX_VARS: usize = 200;

const NEWTON_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleConfig {
    /// Stop when the duality-gap bound falls below `gap_tol * max(1, |f|)`.
    pub gap_tol: f64,
    pub barrier_growth: f64,
    pub max_newton: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            gap_tol: 1e-11,
            barrier_growth: 10.0,
            max_newton: 200,
        }
    }
}

/// Strict inequalities `a_i'x + b_i > 0` and cones `C_j x + d_j in int SOC`.
struct Barrier {
    lin_a: Matrix,
    lin_b: Vector,
    cones: Vec<(Matrix, Vector)>,
}

impl Barrier {
    fn theta(&self) -> f64 {
        self.lin_b.len() as f64 + 2.0 * self.cones.len() as f64
    }

    fn in_domain(&self, x: &Vector) -> bool {
        let s = &self.lin_a * x + &self.lin_b;
        if s.iter().any(|&v| v <= 0.0) {
            return false;
        }
        self.cones.iter().all(|(c, d)| {
            let w = c * x + d;
            w[0] > 0.0 && cone_f(&w) > 0.0
        })
    }

    fn value(&self, x: &Vector) -> f64 {
        let s = &self.lin_a * x + &self.lin_b;
        let mut v = -s.iter().map(|v| v.ln()).sum::<f64>();
        for (c, d) in &self.cones {
            v -= cone_f(&(c * x + d)).ln();
        }
        v
    }

    fn grad_hess(&self, x: &Vector) -> (Vector, Matrix) {
        let n = x.len();
        let s = &self.lin_a * x + &self.lin_b;
        let inv = s.map(|v| 1.0 / v);
        let mut g = -self.lin_a.transpose() * &inv;
        let scaled = Matrix::from_fn(self.lin_a.nrows(), n, |i, j| self.lin_a[(i, j)] * inv[i]);
        let mut h = scaled.transpose() * &scaled;
        for (c, d) in &self.cones {
            let w = c * x + d;
            let f = cone_f(&w);
            let jw = jmul(&w);
            g -= c.transpose() * (&jw * (2.0 / f));
            h += c.transpose() * cone_hessian(&w) * c;
        }
        (g, h)
    }
}

fn cone_f(w: &Vector) -> f64 {
    w[0] * w[0] - w.rows(1, w.len() - 1).norm_squared()
}

/// Hessian of `-log(w'Jw)` with respect to `w`.
fn cone_hessian(w: &Vector) -> Matrix {
    let f = cone_f(w);
    let jw = jmul(w);
    let mut h = &jw * jw.transpose() * (4.0 / (f * f));
    h[(0, 0)] -= 2.0 / f;
    for i in 1..w.len() {
        h[(i, i)] += 2.0 / f;
    }
    h
}

fn jmul(w: &Vector) -> Vector {
    let mut j = -w.clone();
    j[0] = w[0];
    j
}

/// Solves `[H G'; G 0] [dx; nu] = [rhs; 0]`.
fn newton_system(h: &Matrix, g: &Matrix, rhs: &Vector) -> (Vector, Vector) {
    let n = h.nrows();
    let p = g.nrows();
    let mut k = Matrix::zeros(n + p, n + p);
    k.view_mut((0, 0), (n, n)).copy_from(h);
    k.view_mut((0, n), (n, p)).copy_from(&g.transpose());
    k.view_mut((n, 0), (p, n)).copy_from(g);
    let mut b = Vector::zeros(n + p);
    b.rows_mut(0, n).copy_from(rhs);
    let sol = match LU::new(k.clone()).solve(&b) {
        Some(v) if v.iter().all(|x| x.is_finite()) => v,
        _ => SVD::new(k, true, true).solve(&b, 1e-14).expect("SVD with both factors"),
    };
    (sol.rows(0, n).into_owned(), sol.rows(n, p).into_owned())
}

struct Centered {
    x: Vector,
    /// Last Newton direction, not applied.
    dx: Vector,
    nu: Vector,
    steps: usize,
}

/// Newton's method for `t f(x) + phi(x)` subject to `G x = const`, from a
/// feasible start.
fn center<F>(obj: &F, bar: &Barrier, g: &Matrix, x0: Vector, t: f64, max_steps: usize) -> Result<Centered>
where
    F: Fn(&Vector) -> (f64, Vector, Matrix),
{
    let mut x = x0;
    for step in 0..max_steps {
        let (f, fg, fh) = obj(&x);
        let (bg, bh) = bar.grad_hess(&x);
        let grad = fg * t + bg;
        let hess = fh * t + bh;
        let (dx, nu) = newton_system(&hess, g, &-&grad);
        let decrement = -grad.dot(&dx);
        // A nonpositive decrement means the direction is rounding noise.
        if decrement < NEWTON_TOL.max(1e-15 * (t * f).abs()) {
            return Ok(Centered { x, dx, nu, steps: step });
        }
        let phi0 = t * f + bar.value(&x);
        let mut alpha = 1.0;
        loop {
            let xn = &x + &dx * alpha;
            if xn == x {
                return Ok(Centered { x, dx, nu, steps: step });
            }
            if bar.in_domain(&xn) {
                let phin = t * obj(&xn).0 + bar.value(&xn);
                if phin <= phi0 - 0.01 * alpha * decrement {
                    x = xn;
                    break;
                }
            }
            alpha *= 0.5;
            if alpha < 1e-14 {
                return Ok(Centered { x, dx, nu, steps: step });
            }
        }
    }
    Err(Error::NonConvergence {
        iterations: max_steps,
        residual: f64::NAN,
    })
}

/// Solves a small program to high accuracy with a dense barrier method.
pub fn oracle_solve(prog: &ConicProgram, cfg: &OracleConfig) -> Result<Solution> {
    prog.validate()?;
    let n = prog.n;
    if n > ORACLE_MAX_VARS {
        return Err(Error::TooLarge {
            n,
            limit: ORACLE_MAX_VARS,
        });
    }
    let p = prog.p.to_dense();
    let q = Vector::from_row_slice(&prog.q);
    let m = prog.box_matrix.to_dense();
    let c = prog.cone_matrix.to_dense();

    // Rows with equal bounds become equalities.
    let mut g_rows: Vec<(Vec<f64>, f64)> = Vec::new();
    let gd = prog.eq_matrix.to_dense();
    for i in 0..gd.nrows() {
        g_rows.push((gd.row(i).iter().copied().collect(), prog.eq_rhs[i]));
    }
    let mut lin_rows: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut box_map: Vec<(usize, Option<usize>, Option<usize>, Option<usize>)> = Vec::new();
    for i in 0..m.nrows() {
        let row: Vec<f64> = m.row(i).iter().copied().collect();
        let (lo, hi) = (prog.box_lo[i], prog.box_hi[i]);
        if lo == hi {
            box_map.push((i, None, None, Some(g_rows.len())));
            g_rows.push((row, lo));
            continue;
        }
        let up = hi.is_finite().then(|| {
            lin_rows.push((row.iter().map(|v| -v).collect(), hi));
            lin_rows.len() - 1
        });
        let low = lo.is_finite().then(|| {
            lin_rows.push((row.clone(), -lo));
            lin_rows.len() - 1
        });
        box_map.push((i, up, low, None));
    }
    let n_eq = g_rows.len();
    let g = Matrix::from_fn(n_eq, n, |i, j| g_rows[i].0[j]);
    let gv = Vector::from_fn(n_eq, |i, _| g_rows[i].1);
    let lin_a = Matrix::from_fn(lin_rows.len(), n, |i, j| lin_rows[i].0[j]);
    let lin_b = Vector::from_fn(lin_rows.len(), |i, _| lin_rows[i].1);
    let mut cones = Vec::new();
    let mut off = 0;
    for &dim in &prog.cone_dims {
        let cj = c.rows(off, dim).into_owned();
        let dj = Vector::from_row_slice(&prog.cone_offset[off..off + dim]);
        cones.push((cj, dj));
        off += dim;
    }

    // Phase I on (z, s): all slacks shifted by s, minimise s.
    let z0 = if n_eq > 0 {
        SVD::new(g.clone(), true, true)
            .solve(&gv, 1e-13)
            .map_err(|e| Error::Numerical(e.to_string()))?
    } else {
        Vector::zeros(n)
    };
    let phase2 = Barrier {
        lin_a: lin_a.clone(),
        lin_b: lin_b.clone(),
        cones: cones.clone(),
    };
    let mut total_steps = 0;
    let mut z = z0.clone();
    if !phase2.in_domain(&z) {
        let mut worst: f64 = 0.0;
        let lin_s = &lin_a * &z + &lin_b;
        for v in lin_s.iter() {
            worst = worst.max(-v);
        }
        for (cj, dj) in &cones {
            let w = cj * &z + dj;
            worst = worst.max(w.rows(1, w.len() - 1).norm() - w[0]);
        }
        let s0 = worst + 1.0;
        let nl = lin_a.nrows();
        let mut a1 = Matrix::zeros(nl + 1, n + 1);
        a1.view_mut((0, 0), (nl, n)).copy_from(&lin_a);
        for i in 0..nl {
            a1[(i, n)] = 1.0;
        }
        a1[(nl, n)] = 1.0;
        let mut b1 = Vector::zeros(nl + 1);
        b1.rows_mut(0, nl).copy_from(&lin_b);
        b1[nl] = 1.0;
        let cones1: Vec<(Matrix, Vector)> = cones
            .iter()
            .map(|(cj, dj)| {
                let mut ce = Matrix::zeros(cj.nrows(), n + 1);
                ce.view_mut((0, 0), (cj.nrows(), n)).copy_from(cj);
                ce[(0, n)] = 1.0;
                (ce, dj.clone())
            })
            .collect();
        let bar1 = Barrier {
            lin_a: a1,
            lin_b: b1,
            cones: cones1,
        };
        let g1 = Matrix::from_fn(n_eq, n + 1, |i, j| if j < n { g[(i, j)] } else { 0.0 });
        let prox = 1e-6;
        let z0c = z0.clone();
        let obj1 = move |x: &Vector| {
            let dz = x.rows(0, n) - &z0c;
            let f = x[n] + 0.5 * prox * dz.norm_squared();
            let mut gr = Vector::zeros(n + 1);
            gr.rows_mut(0, n).copy_from(&(&dz * prox));
            gr[n] = 1.0;
            let mut h = Matrix::zeros(n + 1, n + 1);
            for i in 0..n {
                h[(i, i)] = prox;
            }
            (f, gr, h)
        };
        let mut x = Vector::zeros(n + 1);
        x.rows_mut(0, n).copy_from(&z);
        x[n] = s0;
        let mut t = 1.0;
        loop {
            let cen = center(&obj1, &bar1, &g1, x, t, cfg.max_newton)?;
            total_steps += cen.steps;
            x = cen.x;
            if x[n] < 0.0 {
                break;
            }
            t *= cfg.barrier_growth;
            if t > 1e12 {
                return Err(Error::Solver(format!(
                    "no strictly feasible point found (best shift {:.3e})",
                    x[n]
                )));
            }
        }
        z = x.rows(0, n).into_owned();
    }

    let obj2 = |x: &Vector| {
        let px = &p * x;
        (0.5 * x.dot(&px) + q.dot(x), px + &q, p.clone())
    };
    let theta = phase2.theta();
    let mut t = 1.0;
    let mut last;
    loop {
        let cen = center(&obj2, &phase2, &g, z.clone(), t, cfg.max_newton)?;
        total_steps += cen.steps;
        z = cen.x.clone();
        let f = obj2(&z).0;
        last = cen;
        if theta == 0.0 || theta / t < cfg.gap_tol * f.abs().max(1.0) {
            break;
        }
        t *= cfg.barrier_growth;
    }

    // Take the final Newton step and linearise the barrier multipliers
    // around it, which makes stationarity exact for a quadratic objective.
    let mut dx = last.dx.clone();
    if !phase2.in_domain(&(&z + &dx)) {
        dx.fill(0.0);
    }
    let nu_n = last.nu;
    let lin_s = &lin_a * &z + &lin_b;
    let lin_d = &lin_a * &dx;
    let lam = |r: usize| (1.0 / lin_s[r] - lin_d[r] / (lin_s[r] * lin_s[r])) / t;
    let mut y = vec![0.0; prog.n_box() + prog.n_cone_rows()];
    for &(i, up, low, eq) in &box_map {
        let mut v = 0.0;
        if let Some(u) = up {
            v += lam(u);
        }
        if let Some(l) = low {
            v -= lam(l);
        }
        if let Some(e) = eq {
            v += nu_n[e] / t;
        }
        y[i] = v;
    }
    let mut off = prog.n_box();
    for (cj, dj) in &cones {
        let w = cj * &z + dj;
        let f = cone_f(&w);
        let yj = (jmul(&w) * (-2.0 / f) + cone_hessian(&w) * (cj * &dx)) / t;
        y[off..off + w.len()].copy_from_slice(yj.as_slice());
        off += w.len();
    }
    z += dx;
    let nu: Vec<f64> = (0..prog.n_eq()).map(|i| nu_n[i] / t).collect();
    let zv: Vec<f64> = z.iter().copied().collect();
    Ok(Solution {
        objective: prog.objective(&zv),
        z: zv,
        y,
        nu,
        status: SolveStatus::Solved,
        iterations: total_steps,
        primal_residual: 0.0,
        dual_residual: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::socp::CscMatrix;

    #[test]
    fn box_constrained_projection() {
        // min |z - (2, -3)|^2 s.t. -1 <= z <= 1
        let mut prog = ConicProgram::empty(2);
        prog.p = CscMatrix::from_triplets(2, 2, &[(0, 0, 2.0), (1, 1, 2.0)]);
        prog.q = vec![-4.0, 6.0];
        prog.box_matrix = CscMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 1, 1.0)]);
        prog.box_lo = vec![-1.0, -1.0];
        prog.box_hi = vec![1.0, 1.0];
        let sol = oracle_solve(&prog, &OracleConfig::default()).unwrap();
        assert!((sol.z[0] - 1.0).abs() < 1e-9 && (sol.z[1] + 1.0).abs() < 1e-9);
        // Multipliers: 2 at the upper bound, -4 at the lower bound.
        assert!((sol.y[0] - 2.0).abs() < 1e-6 && (sol.y[1] + 4.0).abs() < 1e-6);
        assert!(prog.kkt_residuals(&sol).max() < 1e-8);
    }

    #[test]
    fn cone_projection_from_infeasible_start() {
        // min |z - (0, 3, 4)|^2 s.t. z in SOC: answer ((0+5)/2) (1, 0.6, 0.8)
        let mut prog = ConicProgram::empty(3);
        prog.p = CscMatrix::from_triplets(3, 3, &[(0, 0, 2.0), (1, 1, 2.0), (2, 2, 2.0)]);
        prog.q = vec![0.0, -6.0, -8.0];
        prog.cone_matrix = CscMatrix::from_triplets(3, 3, &[(0, 0, 1.0), (1, 1, 1.0), (2, 2, 1.0)]);
        prog.cone_offset = vec![0.0; 3];
        prog.cone_dims = vec![3];
        prog.eq_matrix = CscMatrix::from_triplets(1, 3, &[(0, 1, 1.0)]);
        prog.eq_rhs = vec![1.5];
        let sol = oracle_solve(&prog, &OracleConfig::default()).unwrap();
        // With z1 fixed at 1.5: minimise z0^2 + (z2-4)^2 s.t. z0 >= sqrt(2.25 + z2^2).
        assert!((sol.z[1] - 1.5).abs() < 1e-12);
        let margin = sol.z[0] - (sol.z[1].powi(2) + sol.z[2].powi(2)).sqrt();
        assert!(margin.abs() < 1e-8);
        assert!(prog.kkt_residuals(&sol).max() < 1e-7, "{:?}", prog.kkt_residuals(&sol));
    }

    #[test]
    fn rejects_large_programs() {
        let prog = ConicProgram::empty(ORACLE_MAX_VARS + 1);
        assert!(matches!(oracle_solve(&prog, &OracleConfig::default()), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn detects_infeasibility() {
        let mut prog = ConicProgram::empty(1);
        prog.p = CscMatrix::from_triplets(1, 1, &[(0, 0, 1.0)]);
        prog.eq_matrix = CscMatrix::from_triplets(1, 1, &[(0, 0, 1.0)]);
        prog.eq_rhs = vec![3.0];
        prog.box_matrix = CscMatrix::from_triplets(1, 1, &[(0, 0, 1.0)]);
        prog.box_lo = vec![-1.0];
        prog.box_hi = vec![1.0];
        assert!(oracle_solve(&prog, &OracleConfig::default()).is_err());
    }
}

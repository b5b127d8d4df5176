//! Operator-splitting solver with a cached KKT factorisation.

use crate::error::{Error, Result};

use super::cone::ConeSet;
use super::kkt::{KktScratch, KktSystem};
use super::sparse::CscMatrix;
use super::{dot, inf_norm, ConicProgram, Solution, SolveStatus, SolverConfig};

const DIVERGENCE_BOUND: f64 = 1e10;

/// Per-solve data of a parametric program.
#[derive(Debug, Clone, Copy)]
pub struct ProgramData<'a> {
    pub q: &'a [f64],
    pub eq_rhs: &'a [f64],
    pub constant: f64,
}

#[derive(Debug, Clone, Default)]
pub struct WarmStart {
    pub z: Vec<f64>,
    pub y: Option<Vec<f64>>,
}

/// Solver bound to the matrices of one program. Later calls to
/// [`AdmmSolver::solve`] may change `q`, `eq_rhs`, box bounds and cone
/// offsets but must keep every matrix unchanged.
#[derive(Debug, Clone)]
pub struct AdmmSolver {
    cfg: SolverConfig,
    fingerprint: u64,
    a: CscMatrix,
    kkt: KktSystem,
}

impl AdmmSolver {
    pub fn new(prog: &ConicProgram, cfg: SolverConfig) -> Result<Self> {
        prog.validate()?;
        cfg.validate()?;
        let (a, _) = prog.stacked();
        let kkt = KktSystem::new(&prog.p, &a, &prog.eq_matrix, cfg.sigma, cfg.rho)?;
        Ok(Self {
            cfg,
            fingerprint: prog.pattern_fingerprint(),
            a,
            kkt,
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn kkt(&self) -> &KktSystem {
        &self.kkt
    }

    fn working_set(&self, prog: &ConicProgram) -> (ConeSet, Vec<f64>) {
        let mut k = prog.cone_set();
        let mut d = vec![0.0; prog.n_box()];
        d.extend_from_slice(&prog.cone_offset);
        if self.cfg.strict {
            let (bt, ct) = (self.cfg.box_backoff(), self.cfg.cone_backoff());
            for i in 0..k.lo.len() {
                if k.hi[i] - k.lo[i] > 4.0 * bt {
                    k.lo[i] += bt;
                    k.hi[i] -= bt;
                }
            }
            let mut off = prog.n_box();
            for &dim in &prog.cone_dims {
                d[off] -= ct;
                off += dim;
            }
        }
        (k, d)
    }

    pub fn solve(&self, prog: &ConicProgram, warm: Option<&WarmStart>) -> Result<Solution> {
        if prog.pattern_fingerprint() != self.fingerprint {
            return Err(Error::InvalidArgument("program structure differs from the factorised one".into()));
        }
        let data = ProgramData {
            q: &prog.q,
            eq_rhs: &prog.eq_rhs,
            constant: prog.constant,
        };
        self.solve_with(prog, data, warm)
    }

    /// Solves `prog` with its linear cost, equality right-hand side and
    /// constant replaced by `data`. `prog` must be the program the solver
    /// was built from, up to those three fields.
    pub fn solve_with(&self, prog: &ConicProgram, data: ProgramData<'_>, warm: Option<&WarmStart>) -> Result<Solution> {
        crate::error::check_len("linear cost", prog.n, data.q.len())?;
        crate::error::check_len("equality rhs", prog.n_eq(), data.eq_rhs.len())?;
        let cfg = &self.cfg;
        let n = prog.n;
        let m = self.a.nrows;
        let pe = prog.n_eq();
        let rho = cfg.rho;
        let alpha = cfg.alpha;
        let (k, d) = self.working_set(prog);

        let mut z = vec![0.0; n];
        let mut lam = vec![0.0; m];
        if let Some(w) = warm {
            if w.z.len() == n {
                z.copy_from_slice(&w.z);
            }
            if let Some(y) = &w.y {
                if y.len() == m {
                    for (l, v) in lam.iter_mut().zip(y) {
                        *l = v / rho;
                    }
                }
            }
        }
        let mut s = self.a.mul(&z);
        for (si, di) in s.iter_mut().zip(&d) {
            *si += di;
        }
        k.project(&mut s);

        let nk = n + m + pe;
        let mut rhs = vec![0.0; nk];
        let mut sol = vec![0.0; nk];
        let mut w_relax = vec![0.0; m];
        let mut z_tilde = vec![0.0; n];
        let mut nu = vec![0.0; pe];
        let mut w_tilde = vec![0.0; m];
        let mut s_new = vec![0.0; m];
        let mut scratch = KktScratch::new(nk);
        let mut best: Option<Solution> = None;
        let mut best_score = f64::INFINITY;

        for iter in 1..=cfg.max_iter {
            for i in 0..n {
                rhs[i] = cfg.sigma * z[i] - data.q[i];
            }
            for i in 0..m {
                rhs[n + i] = s[i] - lam[i] - d[i];
            }
            rhs[n + m..].copy_from_slice(data.eq_rhs);
            self.kkt.solve_with_scratch(&rhs, &mut sol, &mut scratch);
            z_tilde.copy_from_slice(&sol[..n]);
            nu.copy_from_slice(&sol[n + m..]);

            self.a.mul_into(&z_tilde, &mut w_tilde);
            for i in 0..m {
                w_tilde[i] += d[i];
                w_relax[i] = alpha * w_tilde[i] + (1.0 - alpha) * s[i];
                s_new[i] = w_relax[i] + lam[i];
            }
            for i in 0..n {
                z[i] = alpha * z_tilde[i] + (1.0 - alpha) * z[i];
            }
            k.project(&mut s_new);
            for i in 0..m {
                lam[i] += w_relax[i] - s_new[i];
            }
            std::mem::swap(&mut s, &mut s_new);

            let finished = iter == cfg.max_iter;
            if iter % cfg.check_interval != 0 && !finished {
                continue;
            }
            if z_tilde.iter().any(|v| !v.is_finite()) || lam.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!("non-finite iterate at iteration {iter}")));
            }
            let prim = w_tilde.iter().zip(&s).fold(0.0f64, |acc, (w, si)| acc.max((w - si).abs()));
            let y: Vec<f64> = lam.iter().map(|l| rho * l).collect();
            let pz = prog.p.mul(&z_tilde);
            let mut aty = vec![0.0; n];
            self.a.tr_mul_add(1.0, &y, &mut aty);
            let mut gtnu = vec![0.0; n];
            prog.eq_matrix.tr_mul_add(1.0, &nu, &mut gtnu);
            let grad: Vec<f64> = (0..n).map(|i| pz[i] + data.q[i] + aty[i] + gtnu[i]).collect();
            let dual = inf_norm(&grad);
            let dual_scale = inf_norm(&pz).max(inf_norm(data.q)).max(inf_norm(&aty)).max(inf_norm(&gtnu));
            let dual_tol = cfg.tol + cfg.rel_tol * dual_scale;

            let make = |status| Solution {
                z: z_tilde.clone(),
                y: y.clone(),
                nu: nu.clone(),
                status,
                iterations: iter,
                primal_residual: prim,
                dual_residual: dual,
                objective: objective(prog, &data, &z_tilde),
            };
            if prim <= cfg.tol && dual <= dual_tol {
                return Ok(make(SolveStatus::Solved));
            }
            if inf_norm(&y) > DIVERGENCE_BOUND {
                return Ok(make(SolveStatus::InfeasibleSuspected));
            }
            let score = (prim / cfg.tol).max(dual / dual_tol);
            if score < best_score {
                best_score = score;
                best = Some(make(SolveStatus::MaxIterations));
            }
        }
        let mut out = best.expect("at least one residual check");
        out.status = SolveStatus::MaxIterations;
        out.iterations = cfg.max_iter;
        Ok(out)
    }
}

fn objective(prog: &ConicProgram, data: &ProgramData<'_>, z: &[f64]) -> f64 {
    0.5 * dot(z, &prog.p.mul(z)) + dot(data.q, z) + data.constant
}

/// Factorises and solves in one call.
pub fn admm_solve(prog: &ConicProgram, cfg: &SolverConfig, warm: Option<&WarmStart>) -> Result<Solution> {
    AdmmSolver::new(prog, cfg.clone())?.solve(prog, warm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::socp::{oracle_solve, OracleConfig, Triplets};

    fn small_program() -> ConicProgram {
        // min (z0-2)^2 + (z1-1)^2 + z2^2   s.t. z0 + z1 + z2 = 1, -0.5 <= z1 <= 0.5,
        // (1 - z0, z1, z2) in SOC
        let mut prog = ConicProgram::empty(3);
        prog.p = CscMatrix::from_triplets(3, 3, &[(0, 0, 2.0), (1, 1, 2.0), (2, 2, 2.0)]);
        prog.q = vec![-4.0, -2.0, 0.0];
        prog.constant = 5.0;
        prog.eq_matrix = CscMatrix::from_triplets(1, 3, &[(0, 0, 1.0), (0, 1, 1.0), (0, 2, 1.0)]);
        prog.eq_rhs = vec![1.0];
        prog.box_matrix = CscMatrix::from_triplets(1, 3, &[(0, 1, 1.0)]);
        prog.box_lo = vec![-0.5];
        prog.box_hi = vec![0.5];
        let mut t = Triplets::default();
        t.push(0, 0, -1.0);
        t.push(1, 1, 1.0);
        t.push(2, 2, 1.0);
        prog.cone_matrix = t.build(3, 3);
        prog.cone_offset = vec![1.0, 0.0, 0.0];
        prog.cone_dims = vec![3];
        prog
    }

    #[test]
    fn agrees_with_oracle() {
        let prog = small_program();
        let cfg = SolverConfig::default().with_tol(1e-9);
        let sol = admm_solve(&prog, &cfg, None).unwrap();
        assert_eq!(sol.status, SolveStatus::Solved);
        let reference = oracle_solve(&prog, &OracleConfig::default()).unwrap();
        for i in 0..3 {
            assert!((sol.z[i] - reference.z[i]).abs() < 1e-6, "{:?} vs {:?}", sol.z, reference.z);
        }
        let res = prog.kkt_residuals(&sol);
        assert!(res.max() < 1e-6, "{res:?}");
    }

    #[test]
    fn strict_mode_returns_feasible_point() {
        let prog = small_program();
        let cfg = SolverConfig {
            strict: true,
            ..SolverConfig::default()
        };
        let sol = admm_solve(&prog, &cfg, None).unwrap();
        assert_eq!(sol.status, SolveStatus::Solved);
        let res = prog.kkt_residuals(&sol);
        assert_eq!(res.inequality, 0.0);
        assert!(res.equality < 1e-12);
    }

    #[test]
    fn warm_start_reduces_iterations() {
        let prog = small_program();
        let cfg = SolverConfig::default().with_tol(1e-8);
        let solver = AdmmSolver::new(&prog, cfg).unwrap();
        let cold = solver.solve(&prog, None).unwrap();
        let warm = WarmStart {
            z: cold.z.clone(),
            y: Some(cold.y.clone()),
        };
        let hot = solver.solve(&prog, Some(&warm)).unwrap();
        assert!(hot.iterations <= cold.iterations);
    }

    #[test]
    fn structural_change_is_rejected() {
        let prog = small_program();
        let solver = AdmmSolver::new(&prog, SolverConfig::default()).unwrap();
        let mut other = prog.clone();
        other.box_matrix = CscMatrix::from_triplets(1, 3, &[(0, 0, 1.0)]);
        assert!(solver.solve(&other, None).is_err());
    }

    #[test]
    fn infeasible_program_is_flagged() {
        let mut prog = ConicProgram::empty(1);
        prog.p = CscMatrix::from_triplets(1, 1, &[(0, 0, 1.0)]);
        prog.eq_matrix = CscMatrix::from_triplets(1, 1, &[(0, 0, 1.0)]);
        prog.eq_rhs = vec![3.0];
        prog.box_matrix = CscMatrix::from_triplets(1, 1, &[(0, 0, 1.0)]);
        prog.box_lo = vec![-1.0];
        prog.box_hi = vec![1.0];
        let cfg = SolverConfig {
            max_iter: 2_000,
            ..SolverConfig::default()
        };
        let sol = admm_solve(&prog, &cfg, None).unwrap();
        assert_ne!(sol.status, SolveStatus::Solved);
    }
}

//! Harmonic MPC: problem assembly, parametric solve, the shifted candidate
//! solution, the optimal artificial reference and the Lyapunov value.
//!
//! Decision vector layout:
//!
//! ```text
//! z = [x^0, u^0, ..., x^{N-1}, u^{N-1}, x_e, x_s, x_c, u_e, u_s, u_c]
//! ```

use std::time::{Duration, Instant};

use nalgebra::Cholesky;

use crate::error::{check_len, Error, Result};
use crate::harmonic::{cone_margins, dynamics_residual, Frequency, HarmonicParams};
use crate::model::{LtiModel, Matrix, OutputConstraint, Vector};
use crate::socp::{AdmmSolver, ConicProgram, ProgramData, SolveStatus, SolverConfig, Triplets, WarmStart};

#[derive(Debug, Clone, PartialEq)]
pub struct HmpcConfig {
    pub horizon: usize,
    pub q: Matrix,
    pub r: Matrix,
    pub t_e: Matrix,
    pub t_h: Matrix,
    pub s_e: Matrix,
    pub s_h: Matrix,
    pub w: Frequency,
    pub sigma: f64,
    pub solver: SolverConfig,
    /// Tolerance used for the optimal-artificial-reference subproblem.
    pub artificial_tol: f64,
}

pub(crate) fn check_pd(name: &str, m: &Matrix, n: usize) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::InvalidArgument(format!(
            "{name} must be {n}x{n}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if (m - m.transpose()).amax() > 1e-12 * (1.0 + m.amax()) {
        return Err(Error::InvalidArgument(format!("{name} is not symmetric")));
    }
    if Cholesky::new(m.clone()).is_none() {
        return Err(Error::InvalidArgument(format!("{name} is not positive definite")));
    }
    Ok(())
}

fn is_diagonal(m: &Matrix) -> bool {
    (0..m.nrows()).all(|i| (0..m.ncols()).all(|j| i == j || m[(i, j)] == 0.0))
}

impl HmpcConfig {
    /// Plate tuning: `Q = diag(10,5,5,5,10,5,5,5)`, `R = 0.5 I`,
    /// `T_e = 50 Q`, `T_h = 0.1 T_e`, `S_e = 10 I`, `S_h = 0.5 S_e`,
    /// `N = 8`, `w = pi/16`, `sigma = 1e-3`.
    pub fn ball_and_plate() -> Self {
        let q = Matrix::from_diagonal(&Vector::from_vec(vec![10.0, 5.0, 5.0, 5.0, 10.0, 5.0, 5.0, 5.0]));
        let r = Matrix::identity(2, 2) * 0.5;
        let t_e = &q * 50.0;
        let s_e = Matrix::identity(2, 2) * 10.0;
        Self {
            horizon: 8,
            t_h: &t_e * 0.1,
            s_h: &s_e * 0.5,
            q,
            r,
            t_e,
            s_e,
            w: Frequency::new(std::f64::consts::PI / 16.0).expect("positive"),
            sigma: 1e-3,
            solver: SolverConfig {
                strict: true,
                ..SolverConfig::default()
            },
            artificial_tol: 1e-6,
        }
    }

    /// Generic tuning with identity-scaled weights.
    pub fn with_weights(nx: usize, nu: usize, horizon: usize, w: Frequency) -> Self {
        let q = Matrix::identity(nx, nx);
        let r = Matrix::identity(nu, nu) * 0.1;
        Self {
            horizon,
            t_e: &q * 10.0,
            t_h: &q * 10.0,
            s_e: &r * 10.0,
            s_h: &r * 10.0,
            q,
            r,
            w,
            sigma: 1e-3,
            solver: SolverConfig {
                strict: true,
                ..SolverConfig::default()
            },
            artificial_tol: 1e-6,
        }
    }

    pub fn validate(&self, model: &LtiModel) -> Result<()> {
        let (nx, nu) = (model.nx(), model.nu());
        if self.horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be positive".into()));
        }
        check_pd("Q", &self.q, nx)?;
        check_pd("R", &self.r, nu)?;
        check_pd("T_e", &self.t_e, nx)?;
        check_pd("T_h", &self.t_h, nx)?;
        check_pd("S_e", &self.s_e, nu)?;
        check_pd("S_h", &self.s_h, nu)?;
        if !is_diagonal(&self.t_h) || !is_diagonal(&self.s_h) {
            return Err(Error::InvalidArgument("T_h and S_h must be diagonal".into()));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!("sigma must be nonnegative, got {}", self.sigma)));
        }
        if !(self.artificial_tol > 0.0) {
            return Err(Error::InvalidArgument("artificial_tol must be positive".into()));
        }
        self.solver.validate()
    }
}

/// Reference parameters `(x_r, u_r)` expressed in relative time.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceParams {
    pub x: HarmonicParams,
    pub u: HarmonicParams,
}

impl ReferenceParams {
    pub fn new(x: HarmonicParams, u: HarmonicParams) -> Self {
        Self { x, u }
    }

    pub fn zeros(nx: usize, nu: usize) -> Self {
        Self {
            x: HarmonicParams::zeros(nx),
            u: HarmonicParams::zeros(nu),
        }
    }

    /// One-step time shift of both triples.
    pub fn advance(&self, w: Frequency) -> Self {
        self.advance_by(w, 1)
    }

    pub fn advance_by(&self, w: Frequency, steps: i64) -> Self {
        let angle = w.value() * steps as f64;
        Self {
            x: self.x.rotate_by(angle),
            u: self.u.rotate_by(angle),
        }
    }

    pub fn eval(&self, w: Frequency, k: i64) -> (Vector, Vector) {
        (self.x.eval(w, k), self.u.eval(w, k))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.x.max_abs_diff(&other.x).max(self.u.max_abs_diff(&other.u))
    }
}

/// Offsets of each block in the decision vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HmpcLayout {
    pub nx: usize,
    pub nu: usize,
    pub horizon: usize,
}

impl HmpcLayout {
    pub fn n_vars(&self) -> usize {
        (self.horizon + 3) * (self.nx + self.nu)
    }

    pub fn n_eq(&self) -> usize {
        self.nx * (self.horizon + 4)
    }

    pub fn x(&self, k: usize) -> usize {
        k * (self.nx + self.nu)
    }

    pub fn u(&self, k: usize) -> usize {
        k * (self.nx + self.nu) + self.nx
    }

    fn base(&self) -> usize {
        self.horizon * (self.nx + self.nu)
    }

    pub fn xe(&self) -> usize {
        self.base()
    }

    pub fn xs(&self) -> usize {
        self.base() + self.nx
    }

    pub fn xc(&self) -> usize {
        self.base() + 2 * self.nx
    }

    pub fn ue(&self) -> usize {
        self.base() + 3 * self.nx
    }

    pub fn us(&self) -> usize {
        self.ue() + self.nu
    }

    pub fn uc(&self) -> usize {
        self.ue() + 2 * self.nu
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveStats {
    pub objective: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub solve_time: Duration,
    /// Inequality multipliers, kept for warm starts.
    pub duals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HmpcSolution {
    pub states: Vec<Vector>,
    pub inputs: Vec<Vector>,
    pub xh: HarmonicParams,
    pub uh: HarmonicParams,
    /// Present for solver output, absent for constructed candidates.
    pub stats: Option<SolveStats>,
}

impl HmpcSolution {
    /// The first input of the predicted sequence.
    pub fn control(&self) -> &Vector {
        &self.inputs[0]
    }

    pub fn horizon(&self) -> usize {
        self.inputs.len()
    }

    pub fn objective(&self) -> Option<f64> {
        self.stats.as_ref().map(|s| s.objective)
    }

    pub fn artificial(&self) -> ReferenceParams {
        ReferenceParams::new(self.xh.clone(), self.uh.clone())
    }

    pub fn to_vector(&self, layout: &HmpcLayout) -> Vec<f64> {
        let mut z = vec![0.0; layout.n_vars()];
        for k in 0..layout.horizon {
            z[layout.x(k)..layout.x(k) + layout.nx].copy_from_slice(self.states[k].as_slice());
            z[layout.u(k)..layout.u(k) + layout.nu].copy_from_slice(self.inputs[k].as_slice());
        }
        z[layout.xe()..layout.ue()].copy_from_slice(self.xh.stacked().as_slice());
        z[layout.ue()..].copy_from_slice(self.uh.stacked().as_slice());
        z
    }

    pub fn from_vector(layout: &HmpcLayout, z: &[f64]) -> Result<Self> {
        check_len("HMPC decision vector", layout.n_vars(), z.len())?;
        let (nx, nu) = (layout.nx, layout.nu);
        let states = (0..layout.horizon)
            .map(|k| Vector::from_row_slice(&z[layout.x(k)..layout.x(k) + nx]))
            .collect();
        let inputs = (0..layout.horizon)
            .map(|k| Vector::from_row_slice(&z[layout.u(k)..layout.u(k) + nu]))
            .collect();
        Ok(Self {
            states,
            inputs,
            xh: HarmonicParams::from_stacked(&z[layout.xe()..layout.ue()])?,
            uh: HarmonicParams::from_stacked(&z[layout.ue()..])?,
            stats: None,
        })
    }
}

/// Residuals of every constraint of the HMPC problem, as nonnegative violations.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ConstraintAudit {
    pub initial: f64,
    pub dynamics: f64,
    pub terminal: f64,
    pub harmonic_dynamics: f64,
    pub outputs: f64,
    pub cones: f64,
}

impl ConstraintAudit {
    pub fn max(&self) -> f64 {
        self.initial
            .max(self.dynamics)
            .max(self.terminal)
            .max(self.harmonic_dynamics)
            .max(self.outputs)
            .max(self.cones)
    }
}

/// Applies the offset weights blockwise to stacked artificial parameters
/// `[x_e, x_s, x_c, u_e, u_s, u_c]`.
fn offset_weights(cfg: &HmpcConfig) -> [&Matrix; 6] {
    [&cfg.t_e, &cfg.t_h, &cfg.t_h, &cfg.s_e, &cfg.s_h, &cfg.s_h]
}

fn stack_reference(r: &ReferenceParams) -> Vec<f64> {
    let mut v: Vec<f64> = r.x.stacked().iter().copied().collect();
    v.extend(r.u.stacked().iter());
    v
}

/// `V_h`: weighted squared distance between artificial and reference parameters.
pub fn offset_cost(xh: &HarmonicParams, uh: &HarmonicParams, reference: &ReferenceParams, cfg: &HmpcConfig) -> f64 {
    let wq = |d: Vector, m: &Matrix| d.dot(&(m * &d));
    wq(&xh.center - &reference.x.center, &cfg.t_e)
        + wq(&xh.sine - &reference.x.sine, &cfg.t_h)
        + wq(&xh.cosine - &reference.x.cosine, &cfg.t_h)
        + wq(&uh.center - &reference.u.center, &cfg.s_e)
        + wq(&uh.sine - &reference.u.sine, &cfg.s_h)
        + wq(&uh.cosine - &reference.u.cosine, &cfg.s_h)
}

/// Sum of stage costs and offset cost of a candidate, evaluated directly.
pub fn total_cost(sol: &HmpcSolution, reference: &ReferenceParams, cfg: &HmpcConfig) -> f64 {
    let mut cost = offset_cost(&sol.xh, &sol.uh, reference, cfg);
    for k in 0..sol.horizon() {
        let dx = &sol.states[k] - sol.xh.eval(cfg.w, k as i64);
        let du = &sol.inputs[k] - sol.uh.eval(cfg.w, k as i64);
        cost += dx.dot(&(&cfg.q * &dx)) + du.dot(&(&cfg.r * &du));
    }
    cost
}

/// The successor-time candidate built from a solution at state `x^0`.
pub fn shift_solution(sol: &HmpcSolution, model: &LtiModel, cfg: &HmpcConfig) -> HmpcSolution {
    let n = sol.horizon();
    let (a, b) = (model.a(), model.b());
    let mut inputs: Vec<Vector> = sol.inputs[1..].to_vec();
    inputs.push(sol.uh.eval(cfg.w, n as i64));
    let mut states = Vec::with_capacity(n);
    states.push(a * &sol.states[0] + b * &sol.inputs[0]);
    for k in 0..n - 1 {
        let next = a * &states[k] + b * &inputs[k];
        states.push(next);
    }
    let uh = sol.uh.rotate(cfg.w);
    let xh = HarmonicParams {
        center: a * &sol.xh.center + b * &sol.uh.center,
        sine: a * &sol.xh.sine + b * &sol.uh.sine,
        cosine: a * &sol.xh.cosine + b * &sol.uh.cosine,
    };
    HmpcSolution {
        states,
        inputs,
        xh,
        uh,
        stats: None,
    }
}

/// Assembly of the HMPC conic program. The Hessian and all constraint
/// matrices are fixed; the measured state enters the equality right-hand
/// side and the reference enters the linear term and the constant.
fn build_program(
    model: &LtiModel,
    cons: &OutputConstraint,
    cfg: &HmpcConfig,
    layout: &HmpcLayout,
) -> (ConicProgram, Vec<Vec<Option<usize>>>) {
    let (nx, nu, n) = (layout.nx, layout.nu, layout.horizon);
    let (a, b) = (model.a(), model.b());
    let w = cfg.w.value();
    let nv = layout.n_vars();

    let mut hess = Triplets::default();
    for k in 0..n {
        let (sk, ck) = (w * k as f64).sin_cos();
        let xcols = [(layout.x(k), 1.0), (layout.xe(), -1.0), (layout.xs(), -sk), (layout.xc(), -ck)];
        let ucols = [(layout.u(k), 1.0), (layout.ue(), -1.0), (layout.us(), -sk), (layout.uc(), -ck)];
        for &(ca, va) in &xcols {
            for &(cb, vb) in &xcols {
                hess.push_block(ca, cb, &cfg.q, 2.0 * va * vb);
            }
        }
        for &(ca, va) in &ucols {
            for &(cb, vb) in &ucols {
                hess.push_block(ca, cb, &cfg.r, 2.0 * va * vb);
            }
        }
    }
    let art = [layout.xe(), layout.xs(), layout.xc(), layout.ue(), layout.us(), layout.uc()];
    for (col, m) in art.iter().zip(offset_weights(cfg)) {
        hess.push_block(*col, *col, m, 2.0);
    }

    let mut eq = Triplets::default();
    eq.push_identity(0, layout.x(0), nx, 1.0);
    for k in 0..n - 1 {
        let row = nx * (k + 1);
        eq.push_identity(row, layout.x(k + 1), nx, 1.0);
        eq.push_block(row, layout.x(k), a, -1.0);
        eq.push_block(row, layout.u(k), b, -1.0);
    }
    let row = nx * n;
    let (sn, cn) = (w * n as f64).sin_cos();
    eq.push_block(row, layout.x(n - 1), a, 1.0);
    eq.push_block(row, layout.u(n - 1), b, 1.0);
    eq.push_identity(row, layout.xe(), nx, -1.0);
    eq.push_identity(row, layout.xs(), nx, -sn);
    eq.push_identity(row, layout.xc(), nx, -cn);
    push_harmonic_dynamics(&mut eq, nx * (n + 1), layout.xe(), layout.ue(), nx, nu, a, b, w);

    let (bx, lo, hi, box_index) = stage_rows(cons, layout);
    let (cone_t, cone_offset, cone_dims) = cone_rows(cons, cfg.sigma, layout.xe(), layout.ue(), nx, nu);

    let prog = ConicProgram {
        n: nv,
        p: hess.build(nv, nv),
        q: vec![0.0; nv],
        constant: 0.0,
        eq_matrix: eq.build(layout.n_eq(), nv),
        eq_rhs: vec![0.0; layout.n_eq()],
        box_matrix: bx.build(lo.len(), nv),
        box_lo: lo,
        box_hi: hi,
        cone_matrix: cone_t.build(cone_offset.len(), nv),
        cone_offset,
        cone_dims,
    };
    (prog, box_index)
}

/// Rows of the three `D` equalities starting at `row`, for artificial
/// parameters stored contiguously at `xcol` (`x_e, x_s, x_c`) and `ucol`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn push_harmonic_dynamics(
    t: &mut Triplets,
    row: usize,
    xcol: usize,
    ucol: usize,
    nx: usize,
    nu: usize,
    a: &Matrix,
    b: &Matrix,
    w: f64,
) {
    let (sw, cw) = w.sin_cos();
    let (xe, xs, xc) = (xcol, xcol + nx, xcol + 2 * nx);
    let (ue, us, uc) = (ucol, ucol + nu, ucol + 2 * nu);
    t.push_identity(row, xe, nx, 1.0);
    t.push_block(row, xe, a, -1.0);
    t.push_block(row, ue, b, -1.0);
    let r = row + nx;
    t.push_identity(r, xs, nx, cw);
    t.push_block(r, xs, a, -1.0);
    t.push_identity(r, xc, nx, -sw);
    t.push_block(r, us, b, -1.0);
    let r = row + 2 * nx;
    t.push_identity(r, xs, nx, sw);
    t.push_identity(r, xc, nx, cw);
    t.push_block(r, xc, a, -1.0);
    t.push_block(r, uc, b, -1.0);
}

/// Output rows for predicted stages, skipping stage-0 rows that depend on the
/// (fixed) initial state only. Returns the row index of each `(k, i)`.
fn stage_rows(
    cons: &OutputConstraint,
    layout: &HmpcLayout,
) -> (Triplets, Vec<f64>, Vec<f64>, Vec<Vec<Option<usize>>>) {
    let mut t = Triplets::default();
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    let mut index = vec![vec![None; cons.ny()]; layout.horizon];
    for k in 0..layout.horizon {
        for i in 0..cons.ny() {
            if k == 0 && !cons.row_has_input(i) {
                continue;
            }
            let row = lo.len();
            push_output_row(&mut t, row, cons, i, layout.x(k), layout.u(k), 1.0);
            lo.push(cons.lo()[i]);
            hi.push(cons.hi()[i]);
            index[k][i] = Some(row);
        }
    }
    (t, lo, hi, index)
}

pub(crate) fn push_output_row(
    t: &mut Triplets,
    row: usize,
    cons: &OutputConstraint,
    i: usize,
    xcol: usize,
    ucol: usize,
    scale: f64,
) {
    for j in 0..cons.nx() {
        let v = cons.e()[(i, j)];
        if v != 0.0 {
            t.push(row, xcol + j, scale * v);
        }
    }
    for j in 0..cons.nu() {
        let v = cons.f()[(i, j)];
        if v != 0.0 {
            t.push(row, ucol + j, scale * v);
        }
    }
}

/// Two cones per output row: `(hi - sigma - y_e, y_s, y_c)` and
/// `(y_e - lo - sigma, y_s, y_c)`.
pub(crate) fn cone_rows(
    cons: &OutputConstraint,
    sigma: f64,
    xcol: usize,
    ucol: usize,
    nx: usize,
    nu: usize,
) -> (Triplets, Vec<f64>, Vec<usize>) {
    let mut t = Triplets::default();
    let mut offset = Vec::new();
    let mut dims = Vec::new();
    for i in 0..cons.ny() {
        for upper in [true, false] {
            let row = offset.len();
            let sign = if upper { -1.0 } else { 1.0 };
            push_output_row(&mut t, row, cons, i, xcol, ucol, sign);
            push_output_row(&mut t, row + 1, cons, i, xcol + nx, ucol + nu, 1.0);
            push_output_row(&mut t, row + 2, cons, i, xcol + 2 * nx, ucol + 2 * nu, 1.0);
            offset.push(if upper { cons.hi()[i] - sigma } else { -cons.lo()[i] - sigma });
            offset.push(0.0);
            offset.push(0.0);
            dims.push(3);
        }
    }
    (t, offset, dims)
}

/// The optimal-artificial-reference program over `D ∩ C_sigma` alone.
#[derive(Debug, Clone)]
struct ArtificialProblem {
    program: ConicProgram,
    solver: AdmmSolver,
}

impl ArtificialProblem {
    fn new(model: &LtiModel, cons: &OutputConstraint, cfg: &HmpcConfig) -> Result<Self> {
        let (nx, nu) = (model.nx(), model.nu());
        let n = 3 * (nx + nu);
        let mut hess = Triplets::default();
        let offs = [0, nx, 2 * nx, 3 * nx, 3 * nx + nu, 3 * nx + 2 * nu];
        for (o, m) in offs.iter().zip(offset_weights(cfg)) {
            hess.push_block(*o, *o, m, 2.0);
        }
        let mut eq = Triplets::default();
        push_harmonic_dynamics(&mut eq, 0, 0, 3 * nx, nx, nu, model.a(), model.b(), cfg.w.value());
        // Same feasible set as the artificial block of the strict HMPC solve.
        let (ct, offset, dims) = cone_rows(cons, cfg.sigma + cfg.solver.cone_backoff(), 0, 3 * nx, nx, nu);
        let program = ConicProgram {
            n,
            p: hess.build(n, n),
            q: vec![0.0; n],
            constant: 0.0,
            eq_matrix: eq.build(3 * nx, n),
            eq_rhs: vec![0.0; 3 * nx],
            box_matrix: Triplets::default().build(0, n),
            box_lo: Vec::new(),
            box_hi: Vec::new(),
            cone_matrix: ct.build(offset.len(), n),
            cone_offset: offset,
            cone_dims: dims,
        };
        let solver_cfg = SolverConfig {
            strict: false,
            max_iter: cfg.solver.max_iter.max(50_000),
            ..cfg.solver.clone().with_tol(cfg.artificial_tol)
        };
        let solver = AdmmSolver::new(&program, solver_cfg)?;
        Ok(Self { program, solver })
    }

    fn solve(&self, cfg: &HmpcConfig, reference: &ReferenceParams, warm: Option<&WarmStart>) -> Result<ReferenceParams> {
        let r = stack_reference(reference);
        let (q, constant) = linear_offset_term(cfg, &r, self.program.n, 0);
        let data = ProgramData {
            q: &q,
            eq_rhs: &self.program.eq_rhs,
            constant,
        };
        let sol = self.solver.solve_with(&self.program, data, warm)?;
        if sol.status == SolveStatus::InfeasibleSuspected {
            return Err(Error::Solver("artificial reference problem reported divergence".into()));
        }
        let nx3 = reference.x.dim() * 3;
        Ok(ReferenceParams::new(
            HarmonicParams::from_stacked(&sol.z[..nx3])?,
            HarmonicParams::from_stacked(&sol.z[nx3..])?,
        ))
    }
}

/// `q = -2 W r` on the artificial block starting at `col`, and `r' W r`.
fn linear_offset_term(cfg: &HmpcConfig, r: &[f64], n: usize, col: usize) -> (Vec<f64>, f64) {
    let mut q = vec![0.0; n];
    let mut constant = 0.0;
    let mut off = 0;
    for m in offset_weights(cfg) {
        let d = m.nrows();
        let rv = Vector::from_row_slice(&r[off..off + d]);
        let wr = m * &rv;
        for i in 0..d {
            q[col + off + i] = -2.0 * wr[i];
        }
        constant += rv.dot(&wr);
        off += d;
    }
    (q, constant)
}

/// Solves the optimal artificial reference problem: the minimiser of `V_h`
/// over `D ∩ C_sigma`.
pub fn optimal_artificial_reference(
    model: &LtiModel,
    cons: &OutputConstraint,
    cfg: &HmpcConfig,
    reference: &ReferenceParams,
) -> Result<ReferenceParams> {
    cfg.validate(model)?;
    cons.check_model(model)?;
    ArtificialProblem::new(model, cons, cfg)?.solve(cfg, reference, None)
}

/// `W = objective - V_h` at the optimal artificial reference.
pub fn lyapunov_value(
    objective: f64,
    model: &LtiModel,
    cons: &OutputConstraint,
    cfg: &HmpcConfig,
    reference: &ReferenceParams,
) -> Result<f64> {
    let opt = optimal_artificial_reference(model, cons, cfg, reference)?;
    Ok(objective - offset_cost(&opt.x, &opt.u, reference, cfg))
}

/// Cached HMPC problem: assembled program, factorised KKT system and the
/// artificial-reference subproblem.
#[derive(Debug, Clone)]
pub struct HmpcProblem {
    model: LtiModel,
    cons: OutputConstraint,
    cfg: HmpcConfig,
    layout: HmpcLayout,
    program: ConicProgram,
    box_index: Vec<Vec<Option<usize>>>,
    solver: AdmmSolver,
    artificial: ArtificialProblem,
}

impl HmpcProblem {
    pub fn new(model: &LtiModel, cons: &OutputConstraint, cfg: &HmpcConfig) -> Result<Self> {
        cfg.validate(model)?;
        cons.check_model(model)?;
        let layout = HmpcLayout {
            nx: model.nx(),
            nu: model.nu(),
            horizon: cfg.horizon,
        };
        let (program, box_index) = build_program(model, cons, cfg, &layout);
        let solver = AdmmSolver::new(&program, cfg.solver.clone())?;
        let artificial = ArtificialProblem::new(model, cons, cfg)?;
        Ok(Self {
            model: model.clone(),
            cons: cons.clone(),
            cfg: cfg.clone(),
            layout,
            program,
            box_index,
            solver,
            artificial,
        })
    }

    pub fn layout(&self) -> &HmpcLayout {
        &self.layout
    }

    pub fn config(&self) -> &HmpcConfig {
        &self.cfg
    }

    pub fn model(&self) -> &LtiModel {
        &self.model
    }

    pub fn constraints(&self) -> &OutputConstraint {
        &self.cons
    }

    /// Template program with zero reference and zero state.
    pub fn program(&self) -> &ConicProgram {
        &self.program
    }

    /// The program instantiated for a state and reference.
    pub fn instance(&self, x0: &Vector, reference: &ReferenceParams) -> Result<ConicProgram> {
        let (q, eq_rhs, constant) = self.parametric_data(x0, reference)?;
        let mut p = self.program.clone();
        p.q = q;
        p.eq_rhs = eq_rhs;
        p.constant = constant;
        Ok(p)
    }

    fn parametric_data(&self, x0: &Vector, reference: &ReferenceParams) -> Result<(Vec<f64>, Vec<f64>, f64)> {
        check_len("initial state", self.layout.nx, x0.len())?;
        check_len("state reference", self.layout.nx, reference.x.dim())?;
        check_len("input reference", self.layout.nu, reference.u.dim())?;
        let r = stack_reference(reference);
        let (q, constant) = linear_offset_term(&self.cfg, &r, self.layout.n_vars(), self.layout.xe());
        let mut eq_rhs = self.program.eq_rhs.clone();
        eq_rhs[..self.layout.nx].copy_from_slice(x0.as_slice());
        Ok((q, eq_rhs, constant))
    }

    pub fn solve(&self, x0: &Vector, reference: &ReferenceParams, warm: Option<&WarmStart>) -> Result<HmpcSolution> {
        let (q, eq_rhs, constant) = self.parametric_data(x0, reference)?;
        let data = ProgramData {
            q: &q,
            eq_rhs: &eq_rhs,
            constant,
        };
        let start = Instant::now();
        let sol = self.solver.solve_with(&self.program, data, warm)?;
        let elapsed = start.elapsed();
        let mut out = HmpcSolution::from_vector(&self.layout, &sol.z)?;
        out.stats = Some(SolveStats {
            objective: sol.objective,
            status: sol.status,
            iterations: sol.iterations,
            primal_residual: sol.primal_residual,
            dual_residual: sol.dual_residual,
            solve_time: elapsed,
            duals: sol.y,
        });
        Ok(out)
    }

    /// Warm start built from the shifted candidate of `sol`, with inequality
    /// multipliers moved one stage forward and cone multipliers rotated.
    pub fn shifted_warm_start(&self, sol: &HmpcSolution) -> WarmStart {
        let cand = shift_solution(sol, &self.model, &self.cfg);
        let z = cand.to_vector(&self.layout);
        let y = sol.stats.as_ref().map(|st| {
            let prev = &st.duals;
            let nb = self.program.n_box();
            let mut y = vec![0.0; prev.len()];
            for k in 0..self.layout.horizon {
                for i in 0..self.cons.ny() {
                    let (Some(dst), Some(src)) = (
                        self.box_index[k][i],
                        self.box_index.get(k + 1).and_then(|r| r[i]),
                    ) else {
                        continue;
                    };
                    y[dst] = prev[src];
                }
            }
            let (sw, cw) = self.cfg.w.value().sin_cos();
            let mut off = nb;
            while off + 3 <= prev.len() {
                y[off] = prev[off];
                let (s, c) = (prev[off + 1], prev[off + 2]);
                y[off + 1] = s * cw - c * sw;
                y[off + 2] = s * sw + c * cw;
                off += 3;
            }
            y
        });
        WarmStart { z, y }
    }

    /// Violations of every constraint for a candidate at initial state `x0`.
    pub fn audit(&self, x0: &Vector, sol: &HmpcSolution) -> Result<ConstraintAudit> {
        let n = self.layout.horizon;
        check_len("candidate horizon", n, sol.horizon())?;
        let (a, b) = (self.model.a(), self.model.b());
        let w = self.cfg.w;
        let mut audit = ConstraintAudit {
            initial: (&sol.states[0] - x0).amax(),
            ..ConstraintAudit::default()
        };
        for k in 0..n - 1 {
            let r = &sol.states[k + 1] - a * &sol.states[k] - b * &sol.inputs[k];
            audit.dynamics = audit.dynamics.max(r.amax());
        }
        let xn = a * &sol.states[n - 1] + b * &sol.inputs[n - 1];
        audit.terminal = (xn - sol.xh.eval(w, n as i64)).amax();
        audit.harmonic_dynamics = dynamics_residual(&sol.xh, &sol.uh, &self.model, w)?;
        for k in 0..n {
            let y = self.cons.value(&sol.states[k], &sol.inputs[k])?;
            for i in 0..self.cons.ny() {
                let v = (self.cons.lo()[i] - y[i]).max(y[i] - self.cons.hi()[i]);
                audit.outputs = audit.outputs.max(v);
            }
        }
        let margins = cone_margins(&sol.xh, &sol.uh, &self.cons, self.cfg.sigma)?;
        audit.cones = (-margins.min()).max(0.0);
        Ok(audit)
    }

    pub fn optimal_artificial_reference(&self, reference: &ReferenceParams) -> Result<ReferenceParams> {
        self.artificial.solve(&self.cfg, reference, None)
    }

    /// `W = objective - V_h` at the optimal artificial reference.
    pub fn lyapunov_value(&self, objective: f64, reference: &ReferenceParams) -> Result<f64> {
        let opt = self.optimal_artificial_reference(reference)?;
        Ok(objective - offset_cost(&opt.x, &opt.u, reference, &self.cfg))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::make_double_integrator;
    use crate::reference::StateTarget;
    use crate::socp::{oracle_solve, OracleConfig};

    fn di_config(n: usize, w: f64) -> HmpcConfig {
        HmpcConfig::with_weights(2, 1, n, Frequency::new(w).unwrap())
    }

    fn di_reference(w: Frequency, amp: f64) -> ReferenceParams {
        let (model, _) = make_double_integrator();
        crate::reference::harmonic_from_hint(&model, w, &[StateTarget::new(0, 0.5, 0.0, amp)]).unwrap()
    }

    #[test]
    fn dimensions_follow_layout() {
        let (model, cons) = make_double_integrator();
        let cfg = di_config(4, 0.3);
        let p = HmpcProblem::new(&model, &cons, &cfg).unwrap();
        let prog = p.program();
        assert_eq!(prog.n, 4 * 3 + 3 * 3);
        assert_eq!(prog.n_eq(), 16);
        assert_eq!(prog.cone_dims.len(), 2 * cons.ny());
        // Stage 0: only the input row remains.
        assert_eq!(prog.n_box(), 1 + 3 * 3);
    }

    #[test]
    fn pattern_is_independent_of_frequency() {
        let (model, cons) = make_double_integrator();
        let p1 = HmpcProblem::new(&model, &cons, &di_config(4, std::f64::consts::PI / 16.0)).unwrap();
        let p2 = HmpcProblem::new(&model, &cons, &di_config(4, std::f64::consts::PI / 512.0)).unwrap();
        assert_eq!(p1.program().pattern_fingerprint(), p2.program().pattern_fingerprint());
        assert!(p1.program().p.same_pattern(&p2.program().p));
        assert!(p1.program().eq_matrix.same_pattern(&p2.program().eq_matrix));
    }

    #[test]
    fn offset_cost_single_term() {
        let cfg = HmpcConfig::ball_and_plate();
        let zero = ReferenceParams::zeros(8, 2);
        let mut xh = HarmonicParams::zeros(8);
        xh.center[0] = 1.0;
        assert!((offset_cost(&xh, &HarmonicParams::zeros(2), &zero, &cfg) - 500.0).abs() < 1e-12);
    }

    #[test]
    fn matches_oracle_on_double_integrator() {
        let (model, cons) = make_double_integrator();
        let cfg = di_config(4, 0.4);
        let p = HmpcProblem::new(&model, &cons, &cfg).unwrap();
        let r = di_reference(cfg.w, 3.0);
        let x0 = Vector::from_vec(vec![-2.0, 1.0]);
        let sol = p.solve(&x0, &r, None).unwrap();
        let stats = sol.stats.as_ref().unwrap();
        assert_eq!(stats.status, SolveStatus::Solved);
        let prog = p.instance(&x0, &r).unwrap();
        let oracle = oracle_solve(&prog, &OracleConfig::default()).unwrap();
        let rel = (stats.objective - oracle.objective).abs() / (1.0 + oracle.objective.abs());
        assert!(rel < 1e-4, "admm {} oracle {}", stats.objective, oracle.objective);
        assert!((total_cost(&sol, &r, &cfg) - stats.objective).abs() < 1e-8 * (1.0 + stats.objective));
        let audit = p.audit(&x0, &sol).unwrap();
        assert!(audit.max() < 1e-9, "{audit:?}");
    }

    #[test]
    fn on_reference_start_has_zero_stage_cost() {
        let (model, cons) = make_double_integrator();
        let cfg = di_config(4, 0.4);
        let p = HmpcProblem::new(&model, &cons, &cfg).unwrap();
        let r = di_reference(cfg.w, 1.0);
        let (x0, u0) = r.eval(cfg.w, 0);
        let sol = p.solve(&x0, &r, None).unwrap();
        assert!((sol.control() - u0).amax() < 1e-4);
        assert!(sol.objective().unwrap() < 1e-4);
    }

    #[test]
    fn shifted_candidate_is_feasible() {
        let (model, cons) = make_double_integrator();
        let cfg = di_config(5, 0.3);
        let p = HmpcProblem::new(&model, &cons, &cfg).unwrap();
        let r = di_reference(cfg.w, 4.5);
        let x0 = Vector::from_vec(vec![3.0, -1.0]);
        let sol = p.solve(&x0, &r, None).unwrap();
        let x1 = model.step(&x0, sol.control()).unwrap();
        let cand = shift_solution(&sol, &model, &cfg);
        let audit = p.audit(&x1, &cand).unwrap();
        assert!(audit.max() < 1e-8, "{audit:?}");
    }

    #[test]
    fn admissible_reference_is_its_own_optimum() {
        let (model, cons) = make_double_integrator();
        let cfg = di_config(4, 0.4);
        let r = di_reference(cfg.w, 1.0);
        let opt = optimal_artificial_reference(&model, &cons, &cfg, &r).unwrap();
        assert!(opt.max_abs_diff(&r) < 1e-6);
    }

    #[test]
    fn rejects_non_diagonal_shape_weight() {
        let (model, cons) = make_double_integrator();
        let mut cfg = di_config(4, 0.4);
        cfg.t_h[(0, 1)] = 0.1;
        cfg.t_h[(1, 0)] = 0.1;
        assert!(HmpcProblem::new(&model, &cons, &cfg).is_err());
    }
}

//! Comparison controllers: periodic MPC for tracking with an artificial
//! trajectory spanning one reference period, and standard tracking MPC with
//! a Riccati terminal cost.

use std::time::Instant;

use crate::controller::{ControlStep, Controller};
use crate::error::{check_len, Error, Result};
use crate::hmpc::{check_pd, push_output_row, SolveStats};
use crate::model::{LtiModel, Matrix, OutputConstraint, Vector};
use crate::reference::ReferenceSignal;
use crate::socp::{AdmmSolver, ConicProgram, ProgramData, SolveStatus, SolverConfig, Triplets, WarmStart};

const DARE_TOL: f64 = 1e-10;
const DARE_MAX_ITER: usize = 1_000_000;

fn riccati_map(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, p: &Matrix) -> Result<Matrix> {
    let bp = b.transpose() * p;
    let s = r + &bp * b;
    let k = s
        .cholesky()
        .ok_or_else(|| Error::Numerical("R + B'PB is not positive definite".into()))?
        .solve(&(&bp * a));
    let next = q + a.transpose() * p * a - a.transpose() * p * b * k;
    Ok((&next + next.transpose()) * 0.5)
}

/// Stabilising solution of the discrete algebraic Riccati equation by
/// fixed-point iteration from `P = Q`.
pub fn dare_solve(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix) -> Result<Matrix> {
    let n = a.nrows();
    check_len("A columns", n, a.ncols())?;
    check_len("B rows", n, b.nrows())?;
    check_len("Q size", n, q.nrows().max(q.ncols()))?;
    check_len("R size", b.ncols(), r.nrows().max(r.ncols()))?;
    let mut p = q.clone();
    for it in 0..DARE_MAX_ITER {
        let next = riccati_map(a, b, q, r, &p)?;
        let diff = (&next - &p).amax();
        p = next;
        if !diff.is_finite() {
            break;
        }
        if diff <= DARE_TOL * 1e-2 * (1.0 + p.amax()) || (it > 10 && diff == 0.0) {
            return Ok(p);
        }
    }
    Err(Error::NonConvergence {
        iterations: DARE_MAX_ITER,
        residual: dare_residual(a, b, q, r, &p).unwrap_or(f64::NAN),
    })
}

/// `max |P - Ric(P)|`.
pub fn dare_residual(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, p: &Matrix) -> Result<f64> {
    Ok((riccati_map(a, b, q, r, p)? - p).amax())
}

/// Sum of `||x - x_r||_W^2` terms expressed as a quadratic in `z`.
struct QuadraticBuilder {
    hess: Triplets,
}

impl QuadraticBuilder {
    fn new() -> Self {
        Self {
            hess: Triplets::default(),
        }
    }

    /// Adds `||z[a] - z[b]||_W^2`.
    fn difference(&mut self, ca: usize, cb: usize, w: &Matrix) {
        self.hess.push_block(ca, ca, w, 2.0);
        self.hess.push_block(cb, cb, w, 2.0);
        self.hess.push_block(ca, cb, w, -2.0);
        self.hess.push_block(cb, ca, w, -2.0);
    }

    /// Adds `||z[a]||_W^2`; the reference enters the linear term later.
    fn square(&mut self, ca: usize, w: &Matrix) {
        self.hess.push_block(ca, ca, w, 2.0);
    }
}

/// Adds `-2 W r` to `q` at `col` and returns `r' W r`.
fn add_tracking_term(q: &mut [f64], col: usize, w: &Matrix, r: &Vector) -> f64 {
    let wr = w * r;
    for i in 0..r.len() {
        q[col + i] -= 2.0 * wr[i];
    }
    r.dot(&wr)
}

fn solve_program(
    solver: &AdmmSolver,
    program: &ConicProgram,
    q: &[f64],
    eq_rhs: &[f64],
    constant: f64,
    warm: Option<&WarmStart>,
) -> Result<(Vec<f64>, SolveStats)> {
    let start = Instant::now();
    let sol = solver.solve_with(program, ProgramData { q, eq_rhs, constant }, warm)?;
    let stats = SolveStats {
        objective: sol.objective,
        status: sol.status,
        iterations: sol.iterations,
        primal_residual: sol.primal_residual,
        dual_residual: sol.dual_residual,
        solve_time: start.elapsed(),
        duals: sol.y,
    };
    Ok((sol.z, stats))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpctConfig {
    pub period: usize,
    pub horizon: usize,
    pub q: Matrix,
    pub r: Matrix,
    pub t_e: Matrix,
    pub s_e: Matrix,
    pub solver: SolverConfig,
}

impl MpctConfig {
    /// Plate tuning with the offset weights `T_e = 50 Q`, `S_e = 10 I`.
    pub fn ball_and_plate(period: usize) -> Self {
        let hc = crate::hmpc::HmpcConfig::ball_and_plate();
        Self {
            period,
            horizon: hc.horizon,
            q: hc.q,
            r: hc.r,
            t_e: hc.t_e,
            s_e: hc.s_e,
            solver: hc.solver,
        }
    }

    pub fn validate(&self, model: &LtiModel) -> Result<()> {
        if self.period < 2 {
            return Err(Error::InvalidArgument(format!("period must be at least 2, got {}", self.period)));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be positive".into()));
        }
        let (nx, nu) = (model.nx(), model.nu());
        check_pd("Q", &self.q, nx)?;
        check_pd("R", &self.r, nu)?;
        check_pd("T_e", &self.t_e, nx)?;
        check_pd("S_e", &self.s_e, nu)?;
        self.solver.validate()
    }
}

/// `z = [x^0, u^0, ..., x^{N-1}, u^{N-1}, x_a^0, u_a^0, ..., x_a^{T-1}, u_a^{T-1}]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MpctLayout {
    pub nx: usize,
    pub nu: usize,
    pub horizon: usize,
    pub period: usize,
}

impl MpctLayout {
    pub fn n_vars(&self) -> usize {
        (self.horizon + self.period) * (self.nx + self.nu)
    }

    pub fn n_eq(&self) -> usize {
        self.nx * (self.horizon + 1 + self.period)
    }

    pub fn x(&self, k: usize) -> usize {
        k * (self.nx + self.nu)
    }

    pub fn u(&self, k: usize) -> usize {
        self.x(k) + self.nx
    }

    pub fn xa(&self, j: usize) -> usize {
        (self.horizon + j % self.period) * (self.nx + self.nu)
    }

    pub fn ua(&self, j: usize) -> usize {
        self.xa(j) + self.nx
    }
}

#[derive(Debug, Clone)]
pub struct MpctSolution {
    pub states: Vec<Vector>,
    pub inputs: Vec<Vector>,
    pub artificial_states: Vec<Vector>,
    pub artificial_inputs: Vec<Vector>,
    pub stats: SolveStats,
}

/// Output rows of every predicted stage except stage-0 rows without input.
fn push_stage_boxes(
    t: &mut Triplets,
    lo: &mut Vec<f64>,
    hi: &mut Vec<f64>,
    cons: &OutputConstraint,
    xcol: usize,
    ucol: usize,
    skip_state_only: bool,
) {
    for i in 0..cons.ny() {
        if skip_state_only && !cons.row_has_input(i) {
            continue;
        }
        push_output_row(t, lo.len(), cons, i, xcol, ucol, 1.0);
        lo.push(cons.lo()[i]);
        hi.push(cons.hi()[i]);
    }
}

#[derive(Debug, Clone)]
pub struct MpctProblem {
    model: LtiModel,
    cfg: MpctConfig,
    layout: MpctLayout,
    program: ConicProgram,
    solver: AdmmSolver,
}

impl MpctProblem {
    pub fn new(model: &LtiModel, cons: &OutputConstraint, cfg: &MpctConfig) -> Result<Self> {
        cfg.validate(model)?;
        cons.check_model(model)?;
        let (nx, nu) = (model.nx(), model.nu());
        let (a, b) = (model.a(), model.b());
        let layout = MpctLayout {
            nx,
            nu,
            horizon: cfg.horizon,
            period: cfg.period,
        };
        let (n, tp, nv) = (cfg.horizon, cfg.period, layout.n_vars());

        let mut cost = QuadraticBuilder::new();
        for k in 0..n {
            cost.difference(layout.x(k), layout.xa(k), &cfg.q);
            cost.difference(layout.u(k), layout.ua(k), &cfg.r);
        }
        for j in 0..tp {
            cost.square(layout.xa(j), &cfg.t_e);
            cost.square(layout.ua(j), &cfg.s_e);
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
        eq.push_block(row, layout.x(n - 1), a, 1.0);
        eq.push_block(row, layout.u(n - 1), b, 1.0);
        eq.push_identity(row, layout.xa(n), nx, -1.0);
        for j in 0..tp {
            let row = nx * (n + 1 + j);
            eq.push_identity(row, layout.xa(j + 1), nx, 1.0);
            eq.push_block(row, layout.xa(j), a, -1.0);
            eq.push_block(row, layout.ua(j), b, -1.0);
        }

        let mut bx = Triplets::default();
        let (mut lo, mut hi) = (Vec::new(), Vec::new());
        for k in 0..n {
            push_stage_boxes(&mut bx, &mut lo, &mut hi, cons, layout.x(k), layout.u(k), k == 0);
        }
        for j in 0..tp {
            push_stage_boxes(&mut bx, &mut lo, &mut hi, cons, layout.xa(j), layout.ua(j), false);
        }

        let program = ConicProgram {
            n: nv,
            p: cost.hess.build(nv, nv),
            q: vec![0.0; nv],
            constant: 0.0,
            eq_matrix: eq.build(layout.n_eq(), nv),
            eq_rhs: vec![0.0; layout.n_eq()],
            box_matrix: bx.build(lo.len(), nv),
            box_lo: lo,
            box_hi: hi,
            cone_matrix: Triplets::default().build(0, nv),
            cone_offset: Vec::new(),
            cone_dims: Vec::new(),
        };
        let solver = AdmmSolver::new(&program, cfg.solver.clone())?;
        Ok(Self {
            model: model.clone(),
            cfg: cfg.clone(),
            layout,
            program,
            solver,
        })
    }

    pub fn layout(&self) -> &MpctLayout {
        &self.layout
    }

    pub fn program(&self) -> &ConicProgram {
        &self.program
    }

    /// Per-solve data for state `x0` and reference samples over one period
    /// starting at the current time.
    fn data(&self, x0: &Vector, xr: &[Vector], ur: &[Vector]) -> Result<(Vec<f64>, Vec<f64>, f64)> {
        let l = &self.layout;
        check_len("initial state", l.nx, x0.len())?;
        check_len("state reference samples", l.period, xr.len())?;
        check_len("input reference samples", l.period, ur.len())?;
        let mut q = vec![0.0; l.n_vars()];
        let mut constant = 0.0;
        for j in 0..l.period {
            check_len("state reference", l.nx, xr[j].len())?;
            check_len("input reference", l.nu, ur[j].len())?;
            constant += add_tracking_term(&mut q, l.xa(j), &self.cfg.t_e, &xr[j]);
            constant += add_tracking_term(&mut q, l.ua(j), &self.cfg.s_e, &ur[j]);
        }
        let mut eq_rhs = vec![0.0; l.n_eq()];
        eq_rhs[..l.nx].copy_from_slice(x0.as_slice());
        Ok((q, eq_rhs, constant))
    }

    pub fn instance(&self, x0: &Vector, xr: &[Vector], ur: &[Vector]) -> Result<ConicProgram> {
        let (q, eq_rhs, constant) = self.data(x0, xr, ur)?;
        let mut p = self.program.clone();
        p.q = q;
        p.eq_rhs = eq_rhs;
        p.constant = constant;
        Ok(p)
    }

    pub fn solve(&self, x0: &Vector, xr: &[Vector], ur: &[Vector], warm: Option<&WarmStart>) -> Result<MpctSolution> {
        let (q, eq_rhs, constant) = self.data(x0, xr, ur)?;
        let (z, stats) = solve_program(&self.solver, &self.program, &q, &eq_rhs, constant, warm)?;
        let l = &self.layout;
        let slice = |c: usize, d: usize| Vector::from_row_slice(&z[c..c + d]);
        Ok(MpctSolution {
            states: (0..l.horizon).map(|k| slice(l.x(k), l.nx)).collect(),
            inputs: (0..l.horizon).map(|k| slice(l.u(k), l.nu)).collect(),
            artificial_states: (0..l.period).map(|j| slice(l.xa(j), l.nx)).collect(),
            artificial_inputs: (0..l.period).map(|j| slice(l.ua(j), l.nu)).collect(),
            stats,
        })
    }

    /// Successor candidate: inputs shifted, the artificial trajectory advanced
    /// by one sample and its value at `N` appended.
    pub fn shifted_warm_start(&self, sol: &MpctSolution) -> WarmStart {
        let l = &self.layout;
        let (a, b) = (self.model.a(), self.model.b());
        let mut z = vec![0.0; l.n_vars()];
        let mut x = a * &sol.states[0] + b * &sol.inputs[0];
        for k in 0..l.horizon {
            let u = if k + 1 < l.horizon {
                sol.inputs[k + 1].clone()
            } else {
                sol.artificial_inputs[(k + 1) % l.period].clone()
            };
            z[l.x(k)..l.x(k) + l.nx].copy_from_slice(x.as_slice());
            z[l.u(k)..l.u(k) + l.nu].copy_from_slice(u.as_slice());
            x = a * &x + b * &u;
        }
        for j in 0..l.period {
            let src = (j + 1) % l.period;
            z[l.xa(j)..l.xa(j) + l.nx].copy_from_slice(sol.artificial_states[src].as_slice());
            z[l.ua(j)..l.ua(j) + l.nu].copy_from_slice(sol.artificial_inputs[src].as_slice());
        }
        WarmStart { z, y: None }
    }
}

#[derive(Debug, Clone)]
pub struct MpctController {
    problem: MpctProblem,
    previous: Option<MpctSolution>,
}

impl MpctController {
    pub fn new(model: &LtiModel, cons: &OutputConstraint, cfg: &MpctConfig) -> Result<Self> {
        Ok(Self {
            problem: MpctProblem::new(model, cons, cfg)?,
            previous: None,
        })
    }

    pub fn problem(&self) -> &MpctProblem {
        &self.problem
    }
}

impl Controller for MpctController {
    fn name(&self) -> &'static str {
        "mpct"
    }

    fn n_vars(&self) -> usize {
        self.problem.layout.n_vars()
    }

    fn step(&mut self, t: i64, x: &Vector, reference: &ReferenceSignal) -> Result<ControlStep> {
        let (xr, ur) = reference.window(t, self.problem.layout.period);
        let warm = self.previous.as_ref().map(|p| self.problem.shifted_warm_start(p));
        let sol = self.problem.solve(x, &xr, &ur, warm.as_ref())?;
        if sol.stats.status == SolveStatus::InfeasibleSuspected {
            return Err(Error::Solver(format!("MPCT problem infeasible at t = {t}")));
        }
        let step = ControlStep {
            input: sol.inputs[0].clone(),
            objective: sol.stats.objective,
            status: sol.stats.status,
            iterations: sol.stats.iterations,
            solve_time: sol.stats.solve_time,
            fallback: false,
            reference: None,
            artificial: None,
            solution: None,
        };
        self.previous = Some(sol);
        Ok(step)
    }

    fn reset(&mut self) {
        self.previous = None;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StdMpcConfig {
    pub horizon: usize,
    pub q: Matrix,
    pub r: Matrix,
    /// Terminal weight.
    pub p: Matrix,
    pub solver: SolverConfig,
}

impl StdMpcConfig {
    /// Terminal weight from the Riccati equation of `(A, B, Q, R)`.
    pub fn with_riccati(model: &LtiModel, horizon: usize, q: Matrix, r: Matrix, solver: SolverConfig) -> Result<Self> {
        let p = dare_solve(model.a(), model.b(), &q, &r)?;
        Ok(Self {
            horizon,
            q,
            r,
            p,
            solver,
        })
    }

    /// Plate tuning with `N = 15`.
    pub fn ball_and_plate(model: &LtiModel) -> Result<Self> {
        let hc = crate::hmpc::HmpcConfig::ball_and_plate();
        Self::with_riccati(model, 15, hc.q, hc.r, hc.solver)
    }

    pub fn validate(&self, model: &LtiModel) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be positive".into()));
        }
        check_pd("Q", &self.q, model.nx())?;
        check_pd("R", &self.r, model.nu())?;
        check_pd("P", &self.p, model.nx())?;
        self.solver.validate()
    }
}

/// `z = [x^0, u^0, ..., x^{N-1}, u^{N-1}, x^N]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StdMpcLayout {
    pub nx: usize,
    pub nu: usize,
    pub horizon: usize,
}

impl StdMpcLayout {
    pub fn n_vars(&self) -> usize {
        self.horizon * (self.nx + self.nu) + self.nx
    }

    pub fn n_eq(&self) -> usize {
        self.nx * (self.horizon + 1)
    }

    pub fn x(&self, k: usize) -> usize {
        k * (self.nx + self.nu)
    }

    pub fn u(&self, k: usize) -> usize {
        self.x(k) + self.nx
    }
}

#[derive(Debug, Clone)]
pub struct StdMpcSolution {
    pub states: Vec<Vector>,
    pub inputs: Vec<Vector>,
    pub stats: SolveStats,
}

#[derive(Debug, Clone)]
pub struct StdMpcProblem {
    model: LtiModel,
    cfg: StdMpcConfig,
    layout: StdMpcLayout,
    program: ConicProgram,
    solver: AdmmSolver,
}

impl StdMpcProblem {
    pub fn new(model: &LtiModel, cons: &OutputConstraint, cfg: &StdMpcConfig) -> Result<Self> {
        cfg.validate(model)?;
        cons.check_model(model)?;
        let (nx, nu) = (model.nx(), model.nu());
        let (a, b) = (model.a(), model.b());
        let layout = StdMpcLayout {
            nx,
            nu,
            horizon: cfg.horizon,
        };
        let (n, nv) = (cfg.horizon, layout.n_vars());

        let mut cost = QuadraticBuilder::new();
        for k in 0..n {
            cost.square(layout.x(k), &cfg.q);
            cost.square(layout.u(k), &cfg.r);
        }
        cost.square(layout.x(n), &cfg.p);

        let mut eq = Triplets::default();
        eq.push_identity(0, layout.x(0), nx, 1.0);
        for k in 0..n {
            let row = nx * (k + 1);
            eq.push_identity(row, layout.x(k + 1), nx, 1.0);
            eq.push_block(row, layout.x(k), a, -1.0);
            eq.push_block(row, layout.u(k), b, -1.0);
        }

        let mut bx = Triplets::default();
        let (mut lo, mut hi) = (Vec::new(), Vec::new());
        for k in 0..n {
            push_stage_boxes(&mut bx, &mut lo, &mut hi, cons, layout.x(k), layout.u(k), k == 0);
        }

        let program = ConicProgram {
            n: nv,
            p: cost.hess.build(nv, nv),
            q: vec![0.0; nv],
            constant: 0.0,
            eq_matrix: eq.build(layout.n_eq(), nv),
            eq_rhs: vec![0.0; layout.n_eq()],
            box_matrix: bx.build(lo.len(), nv),
            box_lo: lo,
            box_hi: hi,
            cone_matrix: Triplets::default().build(0, nv),
            cone_offset: Vec::new(),
            cone_dims: Vec::new(),
        };
        let solver = AdmmSolver::new(&program, cfg.solver.clone())?;
        Ok(Self {
            model: model.clone(),
            cfg: cfg.clone(),
            layout,
            program,
            solver,
        })
    }

    pub fn layout(&self) -> &StdMpcLayout {
        &self.layout
    }

    pub fn program(&self) -> &ConicProgram {
        &self.program
    }

    /// Per-solve data for `x0` and the reference samples `t, ..., t+N`.
    fn data(&self, x0: &Vector, xr: &[Vector], ur: &[Vector]) -> Result<(Vec<f64>, Vec<f64>, f64)> {
        let l = &self.layout;
        check_len("initial state", l.nx, x0.len())?;
        check_len("state reference samples", l.horizon + 1, xr.len())?;
        check_len("input reference samples", l.horizon, ur.len().min(l.horizon))?;
        let mut q = vec![0.0; l.n_vars()];
        let mut constant = 0.0;
        for k in 0..l.horizon {
            constant += add_tracking_term(&mut q, l.x(k), &self.cfg.q, &xr[k]);
            constant += add_tracking_term(&mut q, l.u(k), &self.cfg.r, &ur[k]);
        }
        constant += add_tracking_term(&mut q, l.x(l.horizon), &self.cfg.p, &xr[l.horizon]);
        let mut eq_rhs = vec![0.0; l.n_eq()];
        eq_rhs[..l.nx].copy_from_slice(x0.as_slice());
        Ok((q, eq_rhs, constant))
    }

    pub fn instance(&self, x0: &Vector, xr: &[Vector], ur: &[Vector]) -> Result<ConicProgram> {
        let (q, eq_rhs, constant) = self.data(x0, xr, ur)?;
        let mut p = self.program.clone();
        p.q = q;
        p.eq_rhs = eq_rhs;
        p.constant = constant;
        Ok(p)
    }

    pub fn solve(&self, x0: &Vector, xr: &[Vector], ur: &[Vector], warm: Option<&WarmStart>) -> Result<StdMpcSolution> {
        let (q, eq_rhs, constant) = self.data(x0, xr, ur)?;
        let (z, stats) = solve_program(&self.solver, &self.program, &q, &eq_rhs, constant, warm)?;
        let l = &self.layout;
        let slice = |c: usize, d: usize| Vector::from_row_slice(&z[c..c + d]);
        Ok(StdMpcSolution {
            states: (0..=l.horizon).map(|k| slice(l.x(k), l.nx)).collect(),
            inputs: (0..l.horizon).map(|k| slice(l.u(k), l.nu)).collect(),
            stats,
        })
    }

    /// Inputs shifted by one with the last one repeated.
    pub fn shifted_warm_start(&self, sol: &StdMpcSolution) -> WarmStart {
        let l = &self.layout;
        let (a, b) = (self.model.a(), self.model.b());
        let mut z = vec![0.0; l.n_vars()];
        let mut x = a * &sol.states[0] + b * &sol.inputs[0];
        for k in 0..l.horizon {
            let u = &sol.inputs[(k + 1).min(l.horizon - 1)];
            z[l.x(k)..l.x(k) + l.nx].copy_from_slice(x.as_slice());
            z[l.u(k)..l.u(k) + l.nu].copy_from_slice(u.as_slice());
            x = a * &x + b * u;
        }
        z[l.x(l.horizon)..].copy_from_slice(x.as_slice());
        WarmStart { z, y: None }
    }
}

#[derive(Debug, Clone)]
pub struct StdMpcController {
    problem: StdMpcProblem,
    previous: Option<StdMpcSolution>,
}

impl StdMpcController {
    pub fn new(model: &LtiModel, cons: &OutputConstraint, cfg: &StdMpcConfig) -> Result<Self> {
        Ok(Self {
            problem: StdMpcProblem::new(model, cons, cfg)?,
            previous: None,
        })
    }

    pub fn problem(&self) -> &StdMpcProblem {
        &self.problem
    }
}

impl Controller for StdMpcController {
    fn name(&self) -> &'static str {
        "stdmpc"
    }

    fn n_vars(&self) -> usize {
        self.problem.layout.n_vars()
    }

    fn step(&mut self, t: i64, x: &Vector, reference: &ReferenceSignal) -> Result<ControlStep> {
        let (xr, ur) = reference.window(t, self.problem.layout.horizon + 1);
        let warm = self.previous.as_ref().map(|p| self.problem.shifted_warm_start(p));
        let sol = self.problem.solve(x, &xr, &ur[..self.problem.layout.horizon], warm.as_ref())?;
        if sol.stats.status == SolveStatus::InfeasibleSuspected {
            return Err(Error::Solver(format!("standard MPC problem infeasible at t = {t}")));
        }
        let step = ControlStep {
            input: sol.inputs[0].clone(),
            objective: sol.stats.objective,
            status: sol.stats.status,
            iterations: sol.stats.iterations,
            solve_time: sol.stats.solve_time,
            fallback: false,
            reference: None,
            artificial: None,
            solution: None,
        };
        self.previous = Some(sol);
        Ok(step)
    }

    fn reset(&mut self) {
        self.previous = None;
    }
}

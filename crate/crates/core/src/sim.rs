//! Closed-loop simulation, audits, the tracking performance metric and the
//! period sweep.

use std::io::Write;
use std::time::Duration;

use serde::Serialize;

use crate::baselines::{MpctConfig, MpctController, StdMpcConfig, StdMpcController};
use crate::controller::{Controller, HmpcController};
use crate::error::{Error, Result};
use crate::harmonic::{Frequency, HarmonicParams};
use crate::hmpc::{shift_solution, HmpcConfig, HmpcProblem, ReferenceParams};
use crate::model::{LtiModel, Matrix, OutputConstraint, Vector};
use crate::reference::{make_admissible_harmonic, ReferenceSignal, StateTarget};
use crate::socp::SolveStatus;

pub const LOG_SCHEMA_VERSION: u32 = 1;
pub const SWEEP_SCHEMA_VERSION: u32 = 1;
/// Relative slack allowed in the decrease of `W`.
pub const LYAPUNOV_SLACK: f64 = 1e-6;

#[derive(Debug, Clone)]
pub enum ControllerSpec {
    Hmpc(HmpcConfig),
    Mpct(MpctConfig),
    StdMpc(StdMpcConfig),
}

impl ControllerSpec {
    pub fn build(&self, model: &LtiModel, cons: &OutputConstraint) -> Result<Box<dyn Controller>> {
        Ok(match self {
            Self::Hmpc(c) => Box::new(HmpcController::new(model, cons, c)?),
            Self::Mpct(c) => Box::new(MpctController::new(model, cons, c)?),
            Self::StdMpc(c) => Box::new(StdMpcController::new(model, cons, c)?),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Hmpc(_) => "hmpc",
            Self::Mpct(_) => "mpct",
            Self::StdMpc(_) => "stdmpc",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReferenceSwitch {
    pub at: usize,
    pub reference: ReferenceSignal,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub model: LtiModel,
    pub constraints: OutputConstraint,
    pub controller: ControllerSpec,
    pub reference: ReferenceSignal,
    pub x0: Vector,
    pub duration: usize,
    pub switch: Option<ReferenceSwitch>,
    /// Evaluate `W` at every step (HMPC only).
    pub lyapunov: bool,
    /// Check the shifted candidate at every step (HMPC only).
    pub feasibility: bool,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.duration == 0 {
            return Err(Error::InvalidArgument("duration must be at least 1".into()));
        }
        if self.x0.len() != self.model.nx() {
            return Err(Error::Dimension {
                what: "initial state",
                expected: self.model.nx(),
                got: self.x0.len(),
            });
        }
        self.constraints.check_model(&self.model)
    }

    pub fn reference_at(&self, t: usize) -> (&ReferenceSignal, usize) {
        match &self.switch {
            Some(s) if t >= s.at => (&s.reference, 1),
            _ => (&self.reference, 0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct StepRecord {
    pub t: usize,
    /// Index of the active reference (0 before the switch, 1 after).
    pub segment: usize,
    pub x: Vector,
    pub u: Vector,
    pub x_ref: Vector,
    pub u_ref: Vector,
    pub objective: f64,
    pub lyapunov: Option<f64>,
    pub status: SolveStatus,
    pub iterations: usize,
    pub solve_time: Duration,
    pub fallback: bool,
    /// Smallest output-constraint margin of `(x, u)`.
    pub margin: f64,
    /// Largest constraint violation of the shifted candidate at the successor state.
    pub shift_residual: Option<f64>,
    pub reference_params: Option<ReferenceParams>,
    pub artificial: Option<ReferenceParams>,
}

impl StepRecord {
    pub fn time_per_iteration(&self) -> Duration {
        self.solve_time / self.iterations.max(1) as u32
    }
}

#[derive(Debug, Clone)]
pub struct ClosedLoopLog {
    pub controller: String,
    pub nx: usize,
    pub nu: usize,
    pub n_vars: usize,
    pub steps: Vec<StepRecord>,
    pub final_state: Vector,
    /// Set when the run aborted early.
    pub failure: Option<String>,
}

impl ClosedLoopLog {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn completed(&self) -> bool {
        self.failure.is_none()
    }

    /// Median wall time per solver iteration.
    pub fn median_time_per_iteration(&self) -> Duration {
        let mut v: Vec<Duration> = self.steps.iter().map(StepRecord::time_per_iteration).collect();
        if v.is_empty() {
            return Duration::ZERO;
        }
        v.sort();
        v[v.len() / 2]
    }

    pub fn non_solved_steps(&self) -> usize {
        self.steps.iter().filter(|s| s.status != SolveStatus::Solved).count()
    }

    pub fn min_margin(&self) -> f64 {
        self.steps.iter().map(|s| s.margin).fold(f64::INFINITY, f64::min)
    }
}

fn lyapunov_at(problem: &HmpcProblem, objective: f64, params: &ReferenceParams) -> Result<f64> {
    problem.lyapunov_value(objective, params)
}

/// Runs the scenario; a controller error ends the run and is kept in the log.
pub fn run_closed_loop(s: &Scenario) -> Result<ClosedLoopLog> {
    s.validate()?;
    let mut ctl = s.controller.build(&s.model, &s.constraints)?;
    let mut log = ClosedLoopLog {
        controller: ctl.name().to_string(),
        nx: s.model.nx(),
        nu: s.model.nu(),
        n_vars: ctl.n_vars(),
        steps: Vec::with_capacity(s.duration),
        final_state: s.x0.clone(),
        failure: None,
    };
    let mut x = s.x0.clone();
    for t in 0..s.duration {
        let (reference, segment) = s.reference_at(t);
        let step = match ctl.step(t as i64, &x, reference) {
            Ok(step) => step,
            Err(e) => {
                log.failure = Some(format!("t = {t}: {e}"));
                break;
            }
        };
        let x_next = s.model.step(&x, &step.input)?;
        let (x_ref, u_ref) = reference.sample(t as i64);
        let mut lyapunov = None;
        let mut shift_residual = None;
        if let (Some(problem), Some(sol)) = (ctl.hmpc(), step.solution.as_ref()) {
            if s.lyapunov {
                let params = step.reference.as_ref().expect("HMPC steps carry reference parameters");
                lyapunov = Some(lyapunov_at(problem, step.objective, params)?);
            }
            if s.feasibility {
                let cand = shift_solution(sol, problem.model(), problem.config());
                shift_residual = Some(problem.audit(&x_next, &cand)?.max());
            }
        }
        log.steps.push(StepRecord {
            t,
            segment,
            margin: s.constraints.min_margin(&x, &step.input)?,
            x: x.clone(),
            u: step.input.clone(),
            x_ref,
            u_ref,
            objective: step.objective,
            lyapunov,
            status: step.status,
            iterations: step.iterations,
            solve_time: step.solve_time,
            fallback: step.fallback,
            shift_residual,
            reference_params: step.reference.clone(),
            artificial: step.artificial.clone(),
        });
        x = x_next;
    }
    log.final_state = x;
    Ok(log)
}

/// `sum_t ||x(t) - x_r(t)||_Q^2 + ||u(t) - u_r(t)||_R^2` over the log.
pub fn performance(log: &ClosedLoopLog, q: &Matrix, r: &Matrix) -> f64 {
    log.steps
        .iter()
        .map(|s| {
            let dx = &s.x - &s.x_ref;
            let du = &s.u - &s.u_ref;
            dx.dot(&(q * &dx)) + du.dot(&(r * &du))
        })
        .sum()
}

/// RMS of the Euclidean tracking error of the selected state components.
pub fn tracking_rms(log: &ClosedLoopLog, states: &[usize]) -> f64 {
    if log.steps.is_empty() {
        return 0.0;
    }
    let sum: f64 = log
        .steps
        .iter()
        .map(|s| states.iter().map(|&i| (s.x[i] - s.x_ref[i]).powi(2)).sum::<f64>())
        .sum();
    (sum / log.steps.len() as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyapunovReport {
    pub values: Vec<f64>,
    /// Steps `t` with `W(t+1) > W(t) + slack (1 + W(t))` inside one segment.
    pub increases: Vec<usize>,
    pub max_increase: f64,
    /// `W` at the start of each segment.
    pub segment_start: Vec<f64>,
    pub min_value: f64,
}

impl LyapunovReport {
    pub fn passed(&self) -> bool {
        self.increases.is_empty()
    }
}

pub fn lyapunov_audit(log: &ClosedLoopLog) -> Option<LyapunovReport> {
    let values: Option<Vec<f64>> = log.steps.iter().map(|s| s.lyapunov).collect();
    let values = values?;
    let mut increases = Vec::new();
    let mut max_increase = f64::NEG_INFINITY;
    let mut segment_start = Vec::new();
    for (i, s) in log.steps.iter().enumerate() {
        if i == 0 || log.steps[i - 1].segment != s.segment {
            segment_start.push(values[i]);
            continue;
        }
        let (prev, cur) = (values[i - 1], values[i]);
        let inc = cur - prev;
        max_increase = max_increase.max(inc / (1.0 + prev.abs()));
        if cur > prev + LYAPUNOV_SLACK * (1.0 + prev.abs()) {
            increases.push(i - 1);
        }
    }
    Some(LyapunovReport {
        min_value: values.iter().copied().fold(f64::INFINITY, f64::min),
        values,
        increases,
        max_increase,
        segment_start,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityReport {
    pub max_shift_residual: f64,
    pub steps_over_tolerance: usize,
    pub non_solved: usize,
    pub fallbacks: usize,
    pub min_margin: f64,
    pub completed: bool,
}

pub fn feasibility_audit(log: &ClosedLoopLog, tol: f64) -> FeasibilityReport {
    let residuals: Vec<f64> = log.steps.iter().filter_map(|s| s.shift_residual).collect();
    FeasibilityReport {
        max_shift_residual: residuals.iter().copied().fold(0.0, f64::max),
        steps_over_tolerance: residuals.iter().filter(|&&r| r > tol).count(),
        non_solved: log.non_solved_steps(),
        fallbacks: log.steps.iter().filter(|s| s.fallback).count(),
        min_margin: log.min_margin(),
        completed: log.completed(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub period: usize,
    pub w: f64,
    pub hmpc_vars: usize,
    pub hmpc_eq: usize,
    pub hmpc_inequalities: usize,
    pub hmpc_pattern: String,
    pub hmpc_time_per_iter_us: f64,
    pub hmpc_iterations: f64,
    pub mpct_vars: usize,
    pub mpct_eq: usize,
    pub mpct_time_per_iter_us: f64,
    pub mpct_iterations: f64,
}

/// Settings of [`period_sweep`].
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub hmpc: HmpcConfig,
    pub mpct: MpctConfig,
    pub periods: Vec<usize>,
    /// Closed-loop steps per controller and period.
    pub steps: usize,
    /// Timed runs per controller and period; the fastest median is kept.
    pub repeats: usize,
    /// Shape of the admissible reference built at each period.
    pub targets: Vec<StateTarget>,
    pub x0: Vector,
}

fn structure_signature(problem: &HmpcProblem) -> String {
    let p = problem.program();
    format!(
        "n={};eq={};box={};cones={:?};pattern={:016x}",
        p.n,
        p.n_eq(),
        p.n_box(),
        p.cone_dims,
        p.pattern_fingerprint()
    )
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

/// Steps one closed loop per controller side by side, so every loop sees the
/// same machine conditions at each step. Returns the median time per
/// iteration in microseconds and the median iteration count of each loop.
fn lockstep_timing(
    model: &LtiModel,
    cons: &OutputConstraint,
    x0: &Vector,
    steps: usize,
    controllers: &[ControllerSpec],
    references: &[(usize, &ReferenceSignal)],
) -> Result<Vec<(f64, f64)>> {
    let mut ctls = controllers.iter().map(|c| c.build(model, cons)).collect::<Result<Vec<_>>>()?;
    let mut xs = vec![x0.clone(); ctls.len()];
    let mut times = vec![Vec::with_capacity(steps); ctls.len()];
    let mut iterations = vec![Vec::with_capacity(steps); ctls.len()];
    for t in 0..steps {
        for (i, ctl) in ctls.iter_mut().enumerate() {
            let (period, reference) = references[i];
            let step = ctl.step(t as i64, &xs[i], reference).map_err(|e| {
                Error::Solver(format!("{} failed in the sweep at period {period}, t = {t}: {e}", ctl.name()))
            })?;
            xs[i] = model.step(&xs[i], &step.input)?;
            times[i].push(step.time_per_iteration().as_secs_f64() * 1e6);
            iterations[i].push(step.iterations as f64);
        }
    }
    Ok(times.into_iter().zip(iterations).map(|(t, n)| (median(t), median(n))).collect())
}

/// Per-iteration solver time of HMPC and MPCT for each reference period.
pub fn period_sweep(model: &LtiModel, cons: &OutputConstraint, spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    if spec.periods.iter().any(|&p| p < 2) {
        return Err(Error::InvalidArgument("periods must be at least 2".into()));
    }
    let repeats = spec.repeats.max(1);
    let mut setups = Vec::with_capacity(spec.periods.len());
    for &period in &spec.periods {
        let w = Frequency::from_period(period as f64)?;
        let params = make_admissible_harmonic(model, cons, w, &spec.targets, spec.hmpc.sigma)?;
        let hmpc_cfg = HmpcConfig { w, ..spec.hmpc.clone() };
        let mpct_cfg = MpctConfig {
            period,
            ..spec.mpct.clone()
        };
        setups.push((period, w, ReferenceSignal::Harmonic { params, w }, hmpc_cfg, mpct_cfg));
    }
    let references: Vec<(usize, &ReferenceSignal)> = setups.iter().map(|s| (s.0, &s.2)).collect();
    let timed = |make: &dyn Fn(usize) -> ControllerSpec| -> Result<Vec<(f64, f64)>> {
        let controllers: Vec<ControllerSpec> = (0..setups.len()).map(make).collect();
        let mut out = vec![(f64::INFINITY, 0.0); setups.len()];
        for _ in 0..repeats {
            let round = lockstep_timing(model, cons, &spec.x0, spec.steps, &controllers, &references)?;
            for (slot, (time, iterations)) in out.iter_mut().zip(round) {
                slot.0 = slot.0.min(time);
                slot.1 = iterations;
            }
        }
        Ok(out)
    };
    let hmpc_times = timed(&|i| ControllerSpec::Hmpc(setups[i].3.clone()))?;
    let mpct_times = timed(&|i| ControllerSpec::Mpct(setups[i].4.clone()))?;
    let mut rows = Vec::with_capacity(setups.len());
    for (i, (period, w, _, hmpc_cfg, mpct_cfg)) in setups.iter().enumerate() {
        let problem = HmpcProblem::new(model, cons, hmpc_cfg)?;
        let mpct = crate::baselines::MpctProblem::new(model, cons, mpct_cfg)?;
        rows.push(SweepRow {
            period: *period,
            w: w.value(),
            hmpc_vars: problem.layout().n_vars(),
            hmpc_eq: problem.program().n_eq(),
            hmpc_inequalities: problem.program().n_box() + problem.program().n_cone_rows(),
            hmpc_pattern: structure_signature(&problem),
            hmpc_time_per_iter_us: hmpc_times[i].0,
            hmpc_iterations: hmpc_times[i].1,
            mpct_vars: mpct.layout().n_vars(),
            mpct_eq: mpct.program().n_eq(),
            mpct_time_per_iter_us: mpct_times[i].0,
            mpct_iterations: mpct_times[i].1,
        });
    }
    Ok(rows)
}

fn status_label(s: SolveStatus) -> &'static str {
    match s {
        SolveStatus::Solved => "solved",
        SolveStatus::MaxIterations => "max_iterations",
        SolveStatus::InfeasibleSuspected => "infeasible_suspected",
    }
}

/// Header of the closed-loop CSV for the given dimensions.
pub fn log_header(nx: usize, nu: usize) -> Vec<String> {
    let mut h: Vec<String> = vec!["t".into(), "segment".into()];
    fn idx(p: &'static str, n: usize) -> impl Iterator<Item = String> {
        (0..n).map(move |i| format!("{p}{i}"))
    }
    h.extend(idx("x", nx));
    h.extend(idx("u", nu));
    h.extend(idx("xr", nx));
    h.extend(idx("ur", nu));
    for name in [
        "objective",
        "lyapunov",
        "status",
        "iterations",
        "solve_time_us",
        "time_per_iter_us",
        "fallback",
        "margin",
        "shift_residual",
    ] {
        h.push(name.into());
    }
    for p in ["xhe", "xhs", "xhc"] {
        h.extend(idx(p, nx));
    }
    for p in ["uhe", "uhs", "uhc"] {
        h.extend(idx(p, nu));
    }
    h
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.12e}")).unwrap_or_default()
}

fn params_fields(p: Option<&HarmonicParams>, dim: usize, out: &mut Vec<String>) {
    match p {
        Some(p) => {
            for v in [&p.center, &p.sine, &p.cosine] {
                out.extend(v.iter().map(|x| format!("{x:.12e}")));
            }
        }
        None => out.extend(std::iter::repeat(String::new()).take(3 * dim)),
    }
}

/// Writes the log as CSV: a `# schema` comment line, the header, one row per step.
pub fn write_log_csv<W: Write>(log: &ClosedLoopLog, out: W) -> Result<()> {
    let mut out = out;
    writeln!(out, "# hmpc-log schema {LOG_SCHEMA_VERSION}")?;
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(log_header(log.nx, log.nu)).map_err(csv_err)?;
    for s in &log.steps {
        let mut rec = vec![s.t.to_string(), s.segment.to_string()];
        for v in [&s.x, &s.u, &s.x_ref, &s.u_ref] {
            rec.extend(v.iter().map(|x| format!("{x:.12e}")));
        }
        rec.push(format!("{:.12e}", s.objective));
        rec.push(opt(s.lyapunov));
        rec.push(status_label(s.status).into());
        rec.push(s.iterations.to_string());
        rec.push(format!("{:.3}", s.solve_time.as_secs_f64() * 1e6));
        rec.push(format!("{:.3}", s.time_per_iteration().as_secs_f64() * 1e6));
        rec.push(u8::from(s.fallback).to_string());
        rec.push(format!("{:.12e}", s.margin));
        rec.push(opt(s.shift_residual));
        params_fields(s.artificial.as_ref().map(|a| &a.x), log.nx, &mut rec);
        params_fields(s.artificial.as_ref().map(|a| &a.u), log.nu, &mut rec);
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the sweep table as CSV with a `# schema` comment line.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut out = out;
    writeln!(out, "# hmpc-sweep schema {SWEEP_SCHEMA_VERSION}")?;
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

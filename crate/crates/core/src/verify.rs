//! Property checks shared by the `verify` subcommand and the test suites.

use std::f64::consts::TAU;
use std::fmt;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::harmonic::{Frequency, HarmonicParams};
use crate::hmpc::{HmpcConfig, HmpcProblem, ReferenceParams};
use crate::model::{make_ball_and_plate, LtiModel, OutputConstraint, Vector, BALL_PLATE_POSITION};
use crate::reference::{make_admissible_harmonic, ReferenceSignal, StateTarget};
use crate::sim::{feasibility_audit, lyapunov_audit, run_closed_loop, ControllerSpec, ReferenceSwitch, Scenario, LYAPUNOV_SLACK};
use crate::socp::{admm_solve, oracle_solve, random_program, OracleConfig, RandomProgramSpec, SolveStatus, SolverConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<4} {:<28} {} ({:.2} s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail,
            self.elapsed.as_secs_f64()
        )
    }
}

fn timed(name: &'static str, body: impl FnOnce() -> Result<(bool, String)>) -> Check {
    let start = Instant::now();
    let (passed, detail) = body().unwrap_or_else(|e| (false, format!("error: {e}")));
    Check {
        name,
        passed,
        detail,
        elapsed: start.elapsed(),
    }
}

fn random_params(rng: &mut ChaCha8Rng, m: usize, scale: f64) -> HarmonicParams {
    let mut v = || Vector::from_fn(m, |_, _| rng.gen_range(-scale..scale));
    HarmonicParams {
        center: v(),
        sine: v(),
        cosine: v(),
    }
}

/// One-step rotation matches a one-step time shift, and a full turn is the identity.
pub fn check_rotation(trials: usize, seed: u64) -> Check {
    timed("rotation_invariance", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        for _ in 0..trials {
            let p = random_params(&mut rng, 4, 1.0);
            let w = Frequency::new(rng.gen_range(0.01..3.0))?;
            let r = p.rotate(w);
            for k in -20..20 {
                worst = worst.max((r.eval(w, k) - p.eval(w, k + 1)).amax());
            }
            worst = worst.max(p.rotate_by(TAU).max_abs_diff(&p));
        }
        Ok((worst <= 1e-12, format!("max deviation {worst:.2e} over {trials} parameter sets")))
    })
}

/// An admissible reference for the plate drawn from random targets.
pub fn random_admissible_reference(
    rng: &mut ChaCha8Rng,
    model: &LtiModel,
    cons: &OutputConstraint,
    w: Frequency,
    sigma: f64,
) -> Result<ReferenceParams> {
    let [px, py] = BALL_PLATE_POSITION;
    let mut targets = vec![
        StateTarget::new(px, rng.gen_range(-0.5..0.5), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
        StateTarget::new(py, rng.gen_range(-0.5..0.5), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
    ];
    loop {
        match make_admissible_harmonic(model, cons, w, &targets, sigma) {
            Ok(p) => return Ok(p),
            Err(crate::Error::InfeasibleHint { .. }) => targets = targets.iter().map(|t| t.scaled(0.8)).collect(),
            Err(e) => return Err(e),
        }
    }
}

/// Members of `D ∩ C_sigma` sampled over `steps` steps satisfy the dynamics
/// and keep a constraint margin of at least `sigma`.
pub fn check_admissible_sampling(sets: usize, steps: usize, seed: u64) -> Check {
    timed("admissible_set_sampling", || {
        let (model, cons) = make_ball_and_plate();
        let sigma = HmpcConfig::ball_and_plate().sigma;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut min_slack = f64::INFINITY;
        let mut max_dyn: f64 = 0.0;
        for _ in 0..sets {
            let w = Frequency::new(rng.gen_range(0.02..1.5))?;
            let p = random_admissible_reference(&mut rng, &model, &cons, w, sigma)?;
            for k in 0..steps as i64 {
                let (x, u) = p.eval(w, k);
                let (x1, _) = p.eval(w, k + 1);
                min_slack = min_slack.min(cons.min_margin(&x, &u)?);
                max_dyn = max_dyn.max((model.step(&x, &u)? - x1).amax());
            }
        }
        let passed = min_slack >= sigma - 1e-9 && max_dyn <= 1e-9;
        Ok((
            passed,
            format!("{sets} sets x {steps} steps: min slack {min_slack:.3e} (sigma {sigma:.0e}), dynamics residual {max_dyn:.1e}"),
        ))
    })
}

/// Outcome of the solver comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverComparison {
    pub worst_relative_objective: f64,
    pub worst_residual: f64,
    pub non_solved: usize,
}

/// ADMM against the dense barrier solver on random programs.
pub fn compare_with_oracle(programs: usize, tol: f64, seed: u64) -> Result<SolverComparison> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = SolverConfig::default().with_tol(tol);
    let mut out = SolverComparison {
        worst_relative_objective: 0.0,
        worst_residual: 0.0,
        non_solved: 0,
    };
    for _ in 0..programs {
        let prog = random_program(&mut rng, &RandomProgramSpec::default());
        let reference = oracle_solve(&prog, &OracleConfig::default())?;
        let sol = admm_solve(&prog, &cfg, None)?;
        if sol.status != SolveStatus::Solved {
            out.non_solved += 1;
        }
        let rel = (sol.objective - reference.objective).abs() / reference.objective.abs().max(f64::MIN_POSITIVE);
        out.worst_relative_objective = out.worst_relative_objective.max(rel);
        out.worst_residual = out.worst_residual.max(sol.primal_residual.max(sol.dual_residual));
    }
    Ok(out)
}

pub fn check_solver_vs_oracle(programs: usize, tol: f64, seed: u64) -> Check {
    timed("solver_vs_oracle", || {
        let c = compare_with_oracle(programs, tol, seed)?;
        let bound = tol.max(1e-6);
        let passed = c.non_solved == 0 && c.worst_relative_objective <= 1e-4 && c.worst_residual <= bound;
        Ok((
            passed,
            format!(
                "{programs} programs at tol {tol:.0e}: objective rel err {:.2e}, residual {:.2e}, unsolved {}",
                c.worst_relative_objective, c.worst_residual, c.non_solved
            ),
        ))
    })
}

/// Largest parameter mismatch between the artificial reference solved at
/// `t + 1` and the rotated one solved at `t`.
pub fn artificial_equivariance_deviation(cfg: &HmpcConfig, references: usize, seed: u64) -> Result<f64> {
    let (model, cons) = make_ball_and_plate();
    let problem = HmpcProblem::new(&model, &cons, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..references {
        let r = ReferenceParams::new(random_params(&mut rng, model.nx(), 1.0), random_params(&mut rng, model.nu(), 0.1));
        let now = problem.optimal_artificial_reference(&r)?;
        let next = problem.optimal_artificial_reference(&r.advance(cfg.w))?;
        worst = worst.max(next.max_abs_diff(&now.advance(cfg.w)));
    }
    Ok(worst)
}

pub fn check_artificial_equivariance(cfg: &HmpcConfig, references: usize, seed: u64) -> Check {
    timed("artificial_equivariance", || {
        let d = artificial_equivariance_deviation(cfg, references, seed)?;
        Ok((d <= 1e-6, format!("{references} references: max parameter deviation {d:.2e}")))
    })
}

/// Circle of radius `radius` on the plate at frequency `w`.
pub fn plate_circle(model: &LtiModel, cons: &OutputConstraint, w: Frequency, radius: f64, sigma: f64) -> Result<ReferenceParams> {
    let [px, py] = BALL_PLATE_POSITION;
    make_admissible_harmonic(
        model,
        cons,
        w,
        &[StateTarget::new(px, 0.0, radius, 0.0), StateTarget::new(py, 0.0, 0.0, radius)],
        sigma,
    )
}

/// Reference outside `C_sigma`: offset centre and a radius beyond the plate.
pub fn plate_nonadmissible(model: &LtiModel, w: Frequency) -> Result<ReferenceParams> {
    let [px, py] = BALL_PLATE_POSITION;
    crate::reference::harmonic_from_hint(
        model,
        w,
        &[StateTarget::new(px, 0.3, 0.0, 0.9), StateTarget::new(py, -0.2, 0.9, 0.0)],
    )
}

/// Shifted solutions stay feasible through a switch to a non-admissible reference.
pub fn check_recursive_feasibility(cfg: &HmpcConfig, steps: usize, switch_at: usize, tol: f64) -> Check {
    timed("shifted_feasibility", || {
        let (model, cons) = make_ball_and_plate();
        let first = plate_circle(&model, &cons, cfg.w, 0.5, cfg.sigma)?;
        let second = plate_nonadmissible(&model, cfg.w)?;
        let s = Scenario {
            model: model.clone(),
            constraints: cons,
            controller: ControllerSpec::Hmpc(cfg.clone()),
            reference: ReferenceSignal::Harmonic { params: first, w: cfg.w },
            x0: Vector::zeros(model.nx()),
            duration: steps,
            switch: Some(ReferenceSwitch {
                at: switch_at,
                reference: ReferenceSignal::Harmonic { params: second, w: cfg.w },
            }),
            lyapunov: false,
            feasibility: true,
        };
        let log = run_closed_loop(&s)?;
        let f = feasibility_audit(&log, tol);
        let infeasible = log.steps.iter().filter(|s| s.status == SolveStatus::InfeasibleSuspected).count();
        let passed = f.completed && log.len() == steps && f.steps_over_tolerance == 0 && infeasible == 0;
        Ok((
            passed,
            format!(
                "{} steps, switch at {switch_at}: max residual {:.2e}, infeasible {infeasible}, unsolved {}, fallbacks {}",
                log.len(),
                f.max_shift_residual,
                f.non_solved,
                f.fallbacks
            ),
        ))
    })
}

/// Outcome of the nominal Lyapunov run.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovRun {
    pub w0: f64,
    pub w_end: f64,
    pub increases: usize,
    pub max_increase: f64,
    pub final_error: f64,
}

/// Admissible circle from rest; `W` is recorded for `horizon + 1` steps.
pub fn lyapunov_run(cfg: &HmpcConfig, horizon: usize) -> Result<LyapunovRun> {
    let (model, cons) = make_ball_and_plate();
    let params = plate_circle(&model, &cons, cfg.w, 0.5, cfg.sigma)?;
    let reference = ReferenceSignal::Harmonic { params, w: cfg.w };
    let s = Scenario {
        model: model.clone(),
        constraints: cons,
        controller: ControllerSpec::Hmpc(cfg.clone()),
        reference: reference.clone(),
        x0: Vector::zeros(model.nx()),
        duration: horizon + 1,
        switch: None,
        lyapunov: true,
        feasibility: false,
    };
    let log = run_closed_loop(&s)?;
    if let Some(f) = &log.failure {
        return Err(crate::Error::Solver(f.clone()));
    }
    let report = lyapunov_audit(&log).expect("HMPC records W");
    let last = &log.steps[horizon];
    Ok(LyapunovRun {
        w0: report.values[0],
        w_end: report.values[horizon],
        increases: report.increases.len(),
        max_increase: report.max_increase,
        final_error: (&last.x - &last.x_ref).norm(),
    })
}

pub fn check_lyapunov(cfg: &HmpcConfig) -> Check {
    timed("lyapunov_decrease", || {
        let horizon = 2 * cfg.w.period().round() as usize;
        let r = lyapunov_run(cfg, horizon)?;
        let passed = r.increases == 0 && r.w_end <= 1e-3 * r.w0 && r.final_error <= 1e-3;
        Ok((
            passed,
            format!(
                "W(0) {:.3e}, W({horizon}) {:.3e}, increases {} (slack {LYAPUNOV_SLACK:.0e}), error {:.2e}",
                r.w0, r.w_end, r.increases, r.final_error
            ),
        ))
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    /// Solver tolerance used for the oracle comparison.
    pub tol: f64,
    pub seed: u64,
    pub hmpc: HmpcConfig,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            tol: 1e-4,
            seed: 1,
            hmpc: HmpcConfig::ball_and_plate(),
        }
    }
}

/// The property suite at a size suited to interactive use.
pub fn run_suite(opts: &VerifyOptions) -> Vec<Check> {
    let cfg = &opts.hmpc;
    vec![
        check_rotation(50, opts.seed),
        check_admissible_sampling(20, 1000, opts.seed),
        check_solver_vs_oracle(20, opts.tol, opts.seed),
        check_artificial_equivariance(cfg, 5, opts.seed),
        check_recursive_feasibility(cfg, 60, 30, 1e-8),
        check_lyapunov(cfg),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotation_check_passes() {
        assert!(check_rotation(5, 3).passed);
    }

    #[test]
    fn sampling_check_passes() {
        let c = check_admissible_sampling(3, 200, 4);
        assert!(c.passed, "{c}");
    }

    #[test]
    fn display_marks_failures() {
        let c = Check {
            name: "x",
            passed: false,
            detail: "d".into(),
            elapsed: Duration::ZERO,
        };
        assert!(c.to_string().starts_with("FAIL"));
    }
}

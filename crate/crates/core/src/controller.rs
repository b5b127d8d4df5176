//! Common receding-horizon controller interface and the HMPC controller.

use std::time::Duration;

use crate::error::{Error, Result};
use crate::hmpc::{shift_solution, total_cost, HmpcConfig, HmpcProblem, HmpcSolution, ReferenceParams};
use crate::model::{LtiModel, OutputConstraint, Vector};
use crate::reference::ReferenceSignal;
use crate::socp::SolveStatus;

/// Largest constraint violation accepted for the shifted fallback candidate.
pub const FALLBACK_TOL: f64 = 1e-6;

/// Outcome of one controller invocation.
#[derive(Debug, Clone)]
pub struct ControlStep {
    pub input: Vector,
    pub objective: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    pub solve_time: Duration,
    /// The applied input comes from the shifted previous solution.
    pub fallback: bool,
    /// Harmonic reference parameters handed to the solver (HMPC only).
    pub reference: Option<ReferenceParams>,
    /// Artificial reference of the applied solution (HMPC only).
    pub artificial: Option<ReferenceParams>,
    pub solution: Option<HmpcSolution>,
}

impl ControlStep {
    /// Wall time per solver iteration.
    pub fn time_per_iteration(&self) -> Duration {
        self.solve_time / self.iterations.max(1) as u32
    }
}

pub trait Controller: Send {
    fn name(&self) -> &'static str;

    /// Number of decision variables of the underlying program.
    fn n_vars(&self) -> usize;

    /// Computes the input for state `x` at time `t`.
    fn step(&mut self, t: i64, x: &Vector, reference: &ReferenceSignal) -> Result<ControlStep>;

    /// Forgets warm-start information.
    fn reset(&mut self);

    fn hmpc(&self) -> Option<&HmpcProblem> {
        None
    }
}

#[derive(Debug, Clone)]
pub struct HmpcController {
    problem: HmpcProblem,
    previous: Option<HmpcSolution>,
    warm_start: bool,
}

impl HmpcController {
    pub fn new(model: &LtiModel, cons: &OutputConstraint, cfg: &HmpcConfig) -> Result<Self> {
        Ok(Self {
            problem: HmpcProblem::new(model, cons, cfg)?,
            previous: None,
            warm_start: true,
        })
    }

    pub fn with_warm_start(mut self, on: bool) -> Self {
        self.warm_start = on;
        self
    }

    pub fn problem(&self) -> &HmpcProblem {
        &self.problem
    }

    pub fn previous(&self) -> Option<&HmpcSolution> {
        self.previous.as_ref()
    }
}

impl Controller for HmpcController {
    fn name(&self) -> &'static str {
        "hmpc"
    }

    fn n_vars(&self) -> usize {
        self.problem.layout().n_vars()
    }

    fn step(&mut self, t: i64, x: &Vector, reference: &ReferenceSignal) -> Result<ControlStep> {
        let cfg = self.problem.config();
        let params = reference.params_at(t, cfg.w, cfg.horizon)?;
        let warm = match (&self.previous, self.warm_start) {
            (Some(prev), true) => Some(self.problem.shifted_warm_start(prev)),
            _ => None,
        };
        let sol = self.problem.solve(x, &params, warm.as_ref())?;
        let stats = sol.stats.clone().expect("solver output carries stats");

        let mut applied = sol;
        let mut fallback = false;
        if stats.status != SolveStatus::Solved {
            let candidate = self.previous.as_ref().map(|p| shift_solution(p, self.problem.model(), cfg));
            match candidate {
                Some(c) if self.problem.audit(x, &c)?.max() <= FALLBACK_TOL => {
                    applied = c;
                    fallback = true;
                }
                _ if stats.status == SolveStatus::InfeasibleSuspected => {
                    return Err(Error::Solver(format!("HMPC problem infeasible at t = {t}")));
                }
                _ => {}
            }
        }
        let objective = if fallback {
            total_cost(&applied, &params, cfg)
        } else {
            stats.objective
        };
        if fallback {
            applied.stats = Some(stats.clone());
        }
        self.previous = Some(applied.clone());
        Ok(ControlStep {
            input: applied.control().clone(),
            objective,
            status: stats.status,
            iterations: stats.iterations,
            solve_time: stats.solve_time,
            fallback,
            reference: Some(params),
            artificial: Some(applied.artificial()),
            solution: Some(applied),
        })
    }

    fn reset(&mut self) {
        self.previous = None;
    }

    fn hmpc(&self) -> Option<&HmpcProblem> {
        Some(&self.problem)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harmonic::Frequency;
    use crate::model::make_double_integrator;
    use crate::reference::{harmonic_from_hint, StateTarget};

    #[test]
    fn tracks_admissible_reference_from_rest() {
        let (model, cons) = make_double_integrator();
        let w = Frequency::new(0.4).unwrap();
        let cfg = HmpcConfig::with_weights(2, 1, 6, w);
        let params = harmonic_from_hint(&model, w, &[StateTarget::new(0, 0.0, 1.0, 0.0)]).unwrap();
        let reference = ReferenceSignal::Harmonic { params, w };
        let mut ctl = HmpcController::new(&model, &cons, &cfg).unwrap();
        let mut x = Vector::from_vec(vec![-1.0, 0.0]);
        for t in 0..80 {
            let step = ctl.step(t, &x, &reference).unwrap();
            assert_eq!(step.status, SolveStatus::Solved);
            x = model.step(&x, &step.input).unwrap();
        }
        let (xr, _) = reference.sample(80);
        assert!((x - xr).amax() < 1e-3);
    }
}

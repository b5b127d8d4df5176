use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hmpc::harmonic::{cone_margins, dynamics_residual, Frequency, HarmonicParams};
use hmpc::hmpc::{HmpcConfig, HmpcProblem, ReferenceParams};
use hmpc::model::{make_ball_and_plate, make_double_integrator, LtiModel, Vector, BALL_PLATE_POSITION};
use hmpc::reference::{harmonic_from_hint, local_harmonic_approx, ReferenceSignal, StateTarget};
use hmpc::sim::{run_closed_loop, ControllerSpec, Scenario};
use hmpc::socp::{
    admm_solve, oracle_solve, project_soc, random_program, OracleConfig, RandomProgramSpec, SolveStatus, SolverConfig,
};
use hmpc::verify::plate_circle;

fn vector(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0..2.0f64, n)
}

fn params(n: usize) -> impl Strategy<Value = HarmonicParams> {
    (vector(n), vector(n), vector(n)).prop_map(|(c, s, k)| HarmonicParams {
        center: Vector::from_vec(c),
        sine: Vector::from_vec(s),
        cosine: Vector::from_vec(k),
    })
}

fn models() -> [LtiModel; 2] {
    [make_double_integrator().0, make_ball_and_plate().0]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn step_is_linear(x1 in vector(8), x2 in vector(8), u1 in vector(2), u2 in vector(2)) {
        let m = make_ball_and_plate().0;
        let v = Vector::from_vec;
        let (x1, x2, u1, u2) = (v(x1), v(x2), v(u1), v(u2));
        let lhs = m.step(&(&x1 + &x2), &(&u1 + &u2)).unwrap();
        let rhs = m.step(&x1, &u1).unwrap() + m.step(&x2, &u2).unwrap() - m.step(&Vector::zeros(8), &Vector::zeros(2)).unwrap();
        prop_assert!((lhs - rhs).amax() < 1e-12);
    }

    #[test]
    fn constraint_value_is_direct_product(x in vector(8), u in vector(2)) {
        let (_, c) = make_ball_and_plate();
        let (x, u) = (Vector::from_vec(x), Vector::from_vec(u));
        let y = c.value(&x, &u).unwrap();
        for i in 0..c.ny() {
            let direct: f64 = (0..8).map(|j| c.e()[(i, j)] * x[j]).sum::<f64>() + (0..2).map(|j| c.f()[(i, j)] * u[j]).sum::<f64>();
            prop_assert!((y[i] - direct).abs() < 1e-14);
        }
    }

    #[test]
    fn soc_projection_is_nonexpansive(a in vector(4), b in vector(4)) {
        let (mut pa, mut pb) = (a.clone(), b.clone());
        project_soc(&mut pa);
        project_soc(&mut pb);
        let d = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        prop_assert!(d(&pa, &pb) <= d(&a, &b) + 1e-12);
    }

    #[test]
    fn rotation_is_orthogonal(p in params(5), w in 0.01..3.1f64) {
        let r = p.rotate(Frequency::new(w).unwrap());
        let energy = |q: &HarmonicParams| q.sine.norm_squared() + q.cosine.norm_squared();
        prop_assert!((energy(&r) - energy(&p)).abs() < 1e-12 * (1.0 + energy(&p)));
    }

    #[test]
    fn members_of_d_are_consistent_trajectories(
        c in -0.5..0.5f64, s in -1.0..1.0f64, k in -1.0..1.0f64, w in 0.05..1.5f64, which in 0usize..2,
    ) {
        let model = &models()[which];
        let w = Frequency::new(w).unwrap();
        let r = harmonic_from_hint(model, w, &[StateTarget::new(0, c, s, k)]).unwrap();
        prop_assert!(dynamics_residual(&r.x, &r.u, model, w).unwrap() < 1e-9);
        for t in 0..200 {
            let (x, u) = r.eval(w, t);
            let next = model.step(&x, &u).unwrap();
            prop_assert!((next - r.eval(w, t + 1).0).amax() < 1e-9);
        }
    }

    #[test]
    fn cone_margins_bound_sampled_outputs(p in params(8), q in params(2), w in 0.05..1.5f64, sigma in 0.0..0.1f64) {
        let (_, cons) = make_ball_and_plate();
        let w = Frequency::new(w).unwrap();
        let scale = 0.1;
        let (x, u) = (p.scaled(scale), q.scaled(scale));
        let m = cone_margins(&x, &u, &cons, sigma).unwrap();
        if m.is_member() {
            for k in 0..500 {
                let slack = cons.min_margin(&x.eval(w, k), &u.eval(w, k)).unwrap();
                prop_assert!(slack >= sigma - 1e-9);
            }
        }
    }

    #[test]
    fn local_fit_is_shift_equivariant(s in -1.0..1.0f64, k in -1.0..1.0f64, t in 0i64..40) {
        let (model, _) = make_double_integrator();
        let w = Frequency::new(0.3).unwrap();
        let horizon = 6;
        let r = harmonic_from_hint(&model, w, &[StateTarget::new(0, 0.0, s, k)]).unwrap();
        let sig = ReferenceSignal::Harmonic { params: r, w };
        let fit = |t: i64| {
            let (xs, us) = sig.window(t - 1, horizon + 3);
            local_harmonic_approx(&xs, &us, w, horizon).unwrap()
        };
        let now = fit(t);
        let next = fit(t + 1);
        prop_assert!(next.max_abs_diff(&now.advance(w)) < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn admm_is_not_below_oracle(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let prog = random_program(&mut rng, &RandomProgramSpec { max_vars: 30, ..RandomProgramSpec::default() });
        let o = oracle_solve(&prog, &OracleConfig::default()).unwrap();
        let a = admm_solve(&prog, &SolverConfig::default(), None).unwrap();
        prop_assert!(a.objective >= o.objective - 1e-4 * (1.0 + o.objective.abs()));
    }

    #[test]
    fn hmpc_solutions_meet_terminal_and_artificial_constraints(
        x0 in prop::collection::vec(-0.05..0.05f64, 8), cx in -0.6..0.6f64, r in 0.1..1.2f64,
    ) {
        let (model, cons) = make_ball_and_plate();
        let cfg = HmpcConfig::ball_and_plate();
        let problem = HmpcProblem::new(&model, &cons, &cfg).unwrap();
        let [px, py] = BALL_PLATE_POSITION;
        let reference = harmonic_from_hint(&model, cfg.w, &[StateTarget::new(px, cx, r, 0.0), StateTarget::new(py, 0.0, 0.0, r)]).unwrap();
        let x0 = Vector::from_vec(x0);
        let sol = problem.solve(&x0, &reference, None).unwrap();
        prop_assume!(sol.stats.as_ref().is_some_and(|s| s.status == SolveStatus::Solved));
        let audit = problem.audit(&x0, &sol).unwrap();
        prop_assert!(audit.terminal <= 1e-6, "{audit:?}");
        prop_assert!(audit.harmonic_dynamics <= 1e-6, "{audit:?}");
        prop_assert!(audit.cones <= 1e-6, "{audit:?}");
    }

    #[test]
    fn double_integrator_artificial_reference_is_equivariant(
        p in params(2), q in params(1), w in 0.1..1.0f64,
    ) {
        let (model, cons) = make_double_integrator();
        let cfg = HmpcConfig::with_weights(2, 1, 6, Frequency::new(w).unwrap());
        let problem = HmpcProblem::new(&model, &cons, &cfg).unwrap();
        let r = ReferenceParams::new(p, q);
        let now = problem.optimal_artificial_reference(&r).unwrap();
        let next = problem.optimal_artificial_reference(&r.advance(cfg.w)).unwrap();
        prop_assert!(next.max_abs_diff(&now.advance(cfg.w)) < 1e-6);
    }
}

#[test]
fn warm_start_does_not_change_the_solution() {
    let (model, cons) = make_ball_and_plate();
    let cfg = HmpcConfig::ball_and_plate();
    let problem = HmpcProblem::new(&model, &cons, &cfg).unwrap();
    let reference = plate_circle(&model, &cons, cfg.w, 0.5, cfg.sigma).unwrap();
    let x0 = Vector::zeros(8);
    let cold = problem.solve(&x0, &reference, None).unwrap();
    let other = problem.solve(&Vector::from_element(8, 0.1), &reference, None).unwrap();
    let warm = problem.solve(&x0, &reference, Some(&problem.shifted_warm_start(&other))).unwrap();
    let layout = problem.layout();
    let (a, b) = (cold.to_vector(layout), warm.to_vector(layout));
    let diff = a.iter().zip(&b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
    assert!(diff < 1e-4, "{diff}");
}

fn nominal(spec: ControllerSpec) -> Scenario {
    let (model, cons) = make_ball_and_plate();
    let cfg = HmpcConfig::ball_and_plate();
    let params = plate_circle(&model, &cons, cfg.w, 0.5, cfg.sigma).unwrap();
    Scenario {
        model,
        constraints: cons,
        controller: spec,
        reference: ReferenceSignal::Harmonic { params, w: cfg.w },
        x0: Vector::zeros(8),
        duration: 48,
        switch: None,
        lyapunov: false,
        feasibility: true,
    }
}

#[test]
fn nominal_runs_satisfy_constraints_and_repeat_exactly() {
    let (model, _) = make_ball_and_plate();
    let specs = [
        ControllerSpec::Hmpc(HmpcConfig::ball_and_plate()),
        ControllerSpec::Mpct(hmpc::baselines::MpctConfig::ball_and_plate(32)),
        ControllerSpec::StdMpc(hmpc::baselines::StdMpcConfig::ball_and_plate(&model).unwrap()),
    ];
    for spec in specs {
        let a = run_closed_loop(&nominal(spec.clone())).unwrap();
        let b = run_closed_loop(&nominal(spec)).unwrap();
        assert!(a.completed());
        assert!(a.min_margin() >= -1e-6, "{}: {}", a.controller, a.min_margin());
        for (p, q) in a.steps.iter().zip(&b.steps) {
            assert_eq!(p.x, q.x);
            assert_eq!(p.u, q.u);
            assert_eq!(p.iterations, q.iterations);
        }
    }
}

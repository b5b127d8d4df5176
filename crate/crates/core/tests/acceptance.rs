//! Acceptance criteria. Every criterion prints one PASS/FAIL line; the test
//! fails if any criterion fails.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use hmpc::config::{LabeledScenario, Overrides, ScenarioFile, SweepFile};
use hmpc::hmpc::HmpcConfig;
use hmpc::model::BALL_PLATE_POSITION;
use hmpc::reference::ReferenceSignal;
use hmpc::sim::{feasibility_audit, performance, period_sweep, run_closed_loop, tracking_rms, ClosedLoopLog};
use hmpc::verify::{
    check_admissible_sampling, check_artificial_equivariance, check_lyapunov, check_recursive_feasibility, compare_with_oracle, Check,
};

const SEED: u64 = 2024;

fn config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs").join(format!("{name}.toml"))
}

fn scenarios(name: &str) -> (ScenarioFile, Vec<LabeledScenario>) {
    let (file, _) = ScenarioFile::load(&config(name)).expect("bundled config loads");
    let s = file.resolve(&Overrides::default()).expect("bundled config resolves");
    (file, s)
}

fn run(s: &[LabeledScenario], label: &str) -> ClosedLoopLog {
    let s = s.iter().find(|s| s.label == label).expect("label exists");
    run_closed_loop(&s.scenario).expect("closed loop runs")
}

fn check(name: &'static str, body: impl FnOnce() -> (bool, String)) -> Check {
    let start = Instant::now();
    let (passed, detail) = body();
    Check {
        name,
        passed,
        detail,
        elapsed: start.elapsed(),
    }
}

fn feasible_throughout(log: &ClosedLoopLog, duration: usize) -> bool {
    log.completed() && log.len() == duration && log.non_solved_steps() == 0 && log.min_margin() >= -1e-9
}

fn solver_correctness() -> Check {
    check("solver_vs_oracle", || {
        let start = Instant::now();
        let c = compare_with_oracle(100, 1e-4, SEED).expect("comparison runs");
        let elapsed = start.elapsed();
        let passed = c.non_solved == 0
            && c.worst_relative_objective <= 1e-4
            && c.worst_residual <= 1e-4
            && elapsed <= Duration::from_secs(10);
        (
            passed,
            format!(
                "100 programs: objective rel err {:.2e}, residual {:.2e}, unsolved {}, {:.1} s",
                c.worst_relative_objective,
                c.worst_residual,
                c.non_solved,
                elapsed.as_secs_f64()
            ),
        )
    })
}

fn performance_ordering() -> Check {
    check("performance_ordering", || {
        let (file, s) = scenarios("admissible_harmonic");
        let (q, r) = file.metric_weights().unwrap();
        let h = run(&s, "hmpc");
        let m = run(&s, "mpct");
        let (ph, pm) = (performance(&h, &q, &r), performance(&m, &q, &r));
        let feasible = feasible_throughout(&h, file.duration) && feasible_throughout(&m, file.duration);
        (
            ph <= pm && feasible,
            format!("HMPC {ph:.3} vs MPCT {pm:.3} over {} steps, both feasible: {feasible}", file.duration),
        )
    })
}

fn period_independence() -> Check {
    check("period_sweep", || {
        let start = Instant::now();
        let (file, _) = SweepFile::load(&config("sweep")).unwrap();
        let sweep = file.resolve(&Overrides::default()).unwrap();
        let rows = period_sweep(&sweep.model, &sweep.constraints, &sweep.spec).expect("sweep runs");
        let elapsed = start.elapsed();
        let t: Vec<f64> = rows.iter().map(|r| r.hmpc_time_per_iter_us).collect();
        let (lo, hi) = t.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &v| (l.min(v), h.max(v)));
        let spread = hi / lo - 1.0;
        let growth = rows.last().unwrap().mpct_time_per_iter_us / rows[0].mpct_time_per_iter_us;
        let identical = rows.windows(2).all(|w| w[0].hmpc_pattern == w[1].hmpc_pattern);
        let periods: Vec<usize> = rows.iter().map(|r| r.period).collect();
        let passed = periods == [32, 64, 128, 256, 512]
            && spread < 0.25
            && growth >= 3.0
            && identical
            && elapsed <= Duration::from_secs(120);
        (
            passed,
            format!(
                "HMPC us/iter {t:.1?} (spread {:.1}%), MPCT x{growth:.2} from T=32 to T=512, identical HMPC structure {identical}, {:.1} s",
                100.0 * spread,
                elapsed.as_secs_f64()
            ),
        )
    })
}

fn shape_preservation() -> Check {
    check("shape_preservation", || {
        let (_, s) = scenarios("nonadmissible_shape");
        let distances = |label: &str| {
            let log = run(&s, label);
            let last = log.steps.last().unwrap();
            let (a, r) = (last.artificial.as_ref().unwrap(), last.reference_params.as_ref().unwrap());
            let shape = ((&a.x.sine - &r.x.sine).norm_squared() + (&a.x.cosine - &r.x.cosine).norm_squared()).sqrt();
            (shape, (&a.x.center - &r.x.center).norm(), feasibility_audit(&log, 1e-8).completed)
        };
        let (shape_small, centre_small, ok_small) = distances("hmpc_th_small");
        let (shape_large, centre_large, ok_large) = distances("hmpc_th_large");
        (
            ok_small && ok_large && shape_large < shape_small && centre_large > centre_small,
            format!(
                "shape distance {shape_large:.4} (large T_h) < {shape_small:.4} (small T_h); centre distance {centre_large:.4} > {centre_small:.4}"
            ),
        )
    })
}

fn multi_harmonic_tracking() -> Check {
    check("multi_harmonic_tracking", || {
        let (file, s) = scenarios("multi_harmonic");
        let log = run(&s, "hmpc");
        let reference = &s[0].scenario.reference;
        let ReferenceSignal::Multi(m) = reference else {
            return (false, "reference is not multi-harmonic".into());
        };
        let period = reference.period().unwrap();
        let amplitude = (0..period as i64)
            .map(|t| {
                let x = m.eval(t).0;
                BALL_PLATE_POSITION.iter().map(|&i| (x[i] - m.x_center[i]).powi(2)).sum::<f64>().sqrt()
            })
            .fold(0.0, f64::max);
        let rms = tracking_rms(&log, &BALL_PLATE_POSITION);
        let feasible = feasible_throughout(&log, file.duration) && file.duration >= 2 * period;
        (
            feasible && rms.is_finite() && rms <= 0.05 * amplitude,
            format!(
                "RMS {rms:.4} = {:.2}% of amplitude {amplitude:.3} over {} steps, feasible {feasible}",
                100.0 * rms / amplitude,
                log.len()
            ),
        )
    })
}

#[test]
fn acceptance_criteria() {
    let cfg = HmpcConfig::ball_and_plate();
    let checks = vec![
        solver_correctness(),
        check_admissible_sampling(200, 1000, SEED),
        check_recursive_feasibility(&cfg, 200, 100, 1e-8),
        check_lyapunov(&cfg),
        check_artificial_equivariance(&cfg, 20, SEED),
        performance_ordering(),
        period_independence(),
        shape_preservation(),
        multi_harmonic_tracking(),
    ];
    for c in &checks {
        println!("{c}");
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use hmpc::config::{Overrides, ScenarioFile, SweepFile};
use hmpc::model::Matrix;
use hmpc::sim::{
    feasibility_audit, lyapunov_audit, performance, period_sweep, run_closed_loop, tracking_rms, write_log_csv,
    write_sweep_csv, ClosedLoopLog, ControllerSpec, FeasibilityReport, SweepRow, LOG_SCHEMA_VERSION, SWEEP_SCHEMA_VERSION,
};
use hmpc::verify::{run_suite, VerifyOptions};

/// Harmonic MPC experiments.
#[derive(Parser, Debug)]
#[command(name = "hmpc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Closed-loop runs of every controller in a scenario file.
    Run {
        config: PathBuf,
        /// Output directory for the logs and the summary.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Override the solver tolerance.
        #[arg(long)]
        tol: Option<f64>,
        /// Override the reference seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Per-iteration solve time against the reference period.
    Sweep {
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Property suite with a pass/fail table.
    Verify {
        /// Scenario file whose HMPC tuning is used for the closed-loop checks.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Solver tolerance for the oracle comparison.
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;

fn check_tol(tol: Option<f64>) -> Result<(), String> {
    match tol {
        Some(t) if !(t > 0.0 && t.is_finite()) => Err(format!("--tol must be positive, got {t}")),
        _ => Ok(()),
    }
}

/// Writes through a temporary sibling and renames it into place.
fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

fn write_all(out: &Path, files: &[(String, Vec<u8>)]) -> std::io::Result<()> {
    fs::create_dir_all(out)?;
    for (name, bytes) in files {
        write_atomic(&out.join(name), bytes)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct LyapunovSummary {
    initial: f64,
    last: f64,
    increases: usize,
    max_relative_increase: f64,
}

#[derive(Serialize)]
struct ControllerSummary {
    label: String,
    kind: &'static str,
    log: String,
    n_vars: usize,
    steps: usize,
    completed: bool,
    failure: Option<String>,
    performance: f64,
    tracking_rms: f64,
    median_time_per_iter_us: f64,
    mean_iterations: f64,
    feasibility: FeasibilityReport,
    lyapunov: Option<LyapunovSummary>,
}

#[derive(Serialize)]
struct RunSummary<'a> {
    schema_version: u32,
    kind: &'static str,
    name: &'a str,
    config: String,
    config_sha256: String,
    tol_override: Option<f64>,
    seed_override: Option<u64>,
    warnings: Vec<String>,
    controllers: Vec<ControllerSummary>,
}

fn summarize(label: &str, kind: &'static str, log: &ClosedLoopLog, q: &Matrix, r: &Matrix, states: &[usize]) -> ControllerSummary {
    let all: Vec<usize> = (0..log.nx).collect();
    let states = if states.is_empty() { &all[..] } else { states };
    let lyapunov = lyapunov_audit(log).filter(|l| !l.values.is_empty()).map(|l| LyapunovSummary {
        initial: l.values[0],
        last: *l.values.last().expect("nonempty"),
        increases: l.increases.len(),
        max_relative_increase: l.max_increase,
    });
    ControllerSummary {
        label: label.to_string(),
        kind,
        log: format!("{label}.csv"),
        n_vars: log.n_vars,
        steps: log.len(),
        completed: log.completed(),
        failure: log.failure.clone(),
        performance: performance(log, q, r),
        tracking_rms: tracking_rms(log, states),
        median_time_per_iter_us: log.median_time_per_iteration().as_secs_f64() * 1e6,
        mean_iterations: log.steps.iter().map(|s| s.iterations as f64).sum::<f64>() / log.len().max(1) as f64,
        feasibility: feasibility_audit(log, 1e-8),
        lyapunov,
    }
}

fn cmd_run(config: &Path, out: &Path, ov: Overrides) -> Result<u8, (u8, String)> {
    let cfg_err = |e: hmpc::Error| (EXIT_CONFIG, format!("{}: {e}", config.display()));
    check_tol(ov.tol).map_err(|e| (EXIT_CONFIG, e))?;
    let (file, hash) = ScenarioFile::load(config).map_err(cfg_err)?;
    let scenarios = file.resolve(&ov).map_err(cfg_err)?;
    let (q, r) = file.metric_weights().map_err(cfg_err)?;
    let warnings = file.warnings();
    for w in &warnings {
        eprintln!("warning: {w}");
    }

    let mut files = Vec::new();
    let mut summaries = Vec::new();
    for s in &scenarios {
        let log = run_closed_loop(&s.scenario).map_err(|e| (EXIT_FAILURE, format!("{}: {e}", s.label)))?;
        let mut csv = Vec::new();
        write_log_csv(&log, &mut csv).map_err(|e| (EXIT_FAILURE, e.to_string()))?;
        files.push((format!("{}.csv", s.label), csv));
        let kind = s.scenario.controller.name();
        let summary = summarize(&s.label, kind, &log, &q, &r, &file.tracking_states);
        println!(
            "{:<16} {:<7} perf {:>10.3}  rms {:.4}  unsolved {:>3}  max shift residual {:.1e}{}",
            s.label,
            kind,
            summary.performance,
            summary.tracking_rms,
            summary.feasibility.non_solved,
            summary.feasibility.max_shift_residual,
            log.failure.as_ref().map(|f| format!("  FAILED {f}")).unwrap_or_default()
        );
        if let (ControllerSpec::Hmpc(_), Some(l)) = (&s.scenario.controller, &summary.lyapunov) {
            println!("{:<16} W {:.3e} -> {:.3e}, increases {}", "", l.initial, l.last, l.increases);
        }
        summaries.push(summary);
    }
    let failed = summaries.iter().any(|s| !s.completed);
    let summary = RunSummary {
        schema_version: LOG_SCHEMA_VERSION,
        kind: "run",
        name: &file.name,
        config: config.display().to_string(),
        config_sha256: hash,
        tol_override: ov.tol,
        seed_override: ov.seed,
        warnings,
        controllers: summaries,
    };
    let json = serde_json::to_vec_pretty(&summary).map_err(|e| (EXIT_FAILURE, e.to_string()))?;
    files.push(("summary.json".into(), json));
    write_all(out, &files).map_err(|e| (EXIT_FAILURE, format!("{}: {e}", out.display())))?;
    Ok(if failed { EXIT_FAILURE } else { 0 })
}

#[derive(Serialize)]
struct SweepChecks {
    hmpc_dimensions_constant: bool,
    hmpc_time_variation: f64,
    mpct_growth: f64,
}

#[derive(Serialize)]
struct SweepSummary<'a> {
    schema_version: u32,
    kind: &'static str,
    name: &'a str,
    config: String,
    config_sha256: String,
    tol_override: Option<f64>,
    warnings: Vec<String>,
    checks: SweepChecks,
    rows: &'a [SweepRow],
}

/// Dimension constancy, relative spread of HMPC time and MPCT growth.
fn sweep_checks(rows: &[SweepRow]) -> SweepChecks {
    let t: Vec<f64> = rows.iter().map(|r| r.hmpc_time_per_iter_us).collect();
    let (lo, hi) = t.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &v| (l.min(v), h.max(v)));
    let (first, last) = (rows.first(), rows.last());
    SweepChecks {
        hmpc_dimensions_constant: rows.windows(2).all(|w| w[0].hmpc_pattern == w[1].hmpc_pattern),
        hmpc_time_variation: if lo > 0.0 { hi / lo - 1.0 } else { 0.0 },
        mpct_growth: match (first, last) {
            (Some(a), Some(b)) if a.mpct_time_per_iter_us > 0.0 => b.mpct_time_per_iter_us / a.mpct_time_per_iter_us,
            _ => 1.0,
        },
    }
}

fn cmd_sweep(config: &Path, out: &Path, ov: Overrides) -> Result<u8, (u8, String)> {
    let cfg_err = |e: hmpc::Error| (EXIT_CONFIG, format!("{}: {e}", config.display()));
    check_tol(ov.tol).map_err(|e| (EXIT_CONFIG, e))?;
    let (file, hash) = SweepFile::load(config).map_err(cfg_err)?;
    let sweep = file.resolve(&ov).map_err(cfg_err)?;
    let warnings = file.warnings();
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let rows = period_sweep(&sweep.model, &sweep.constraints, &sweep.spec).map_err(|e| (EXIT_FAILURE, e.to_string()))?;
    println!("{:>7} {:>10} {:>14} {:>10} {:>14}", "period", "hmpc vars", "hmpc us/iter", "mpct vars", "mpct us/iter");
    for r in &rows {
        println!(
            "{:>7} {:>10} {:>14.2} {:>10} {:>14.2}",
            r.period, r.hmpc_vars, r.hmpc_time_per_iter_us, r.mpct_vars, r.mpct_time_per_iter_us
        );
    }
    let checks = sweep_checks(&rows);
    println!(
        "hmpc dimensions constant: {}; hmpc time spread {:.1}%; mpct growth x{:.2}",
        checks.hmpc_dimensions_constant,
        100.0 * checks.hmpc_time_variation,
        checks.mpct_growth
    );
    let mut csv = Vec::new();
    write_sweep_csv(&rows, &mut csv).map_err(|e| (EXIT_FAILURE, e.to_string()))?;
    let summary = SweepSummary {
        schema_version: SWEEP_SCHEMA_VERSION,
        kind: "sweep",
        name: &file.name,
        config: config.display().to_string(),
        config_sha256: hash,
        tol_override: ov.tol,
        warnings,
        checks,
        rows: &rows,
    };
    let json = serde_json::to_vec_pretty(&summary).map_err(|e| (EXIT_FAILURE, e.to_string()))?;
    write_all(out, &[("sweep.csv".into(), csv), ("sweep_summary.json".into(), json)])
        .map_err(|e| (EXIT_FAILURE, format!("{}: {e}", out.display())))?;
    Ok(0)
}

fn cmd_verify(config: Option<&Path>, tol: f64, seed: u64) -> Result<u8, (u8, String)> {
    check_tol(Some(tol)).map_err(|e| (EXIT_CONFIG, e))?;
    let mut opts = VerifyOptions {
        tol,
        seed,
        ..VerifyOptions::default()
    };
    if let Some(path) = config {
        let cfg_err = |e: hmpc::Error| (EXIT_CONFIG, format!("{}: {e}", path.display()));
        let (file, _) = ScenarioFile::load(path).map_err(cfg_err)?;
        for w in file.warnings() {
            println!("WARN {w}");
        }
        let scenarios = file.resolve(&Overrides::default()).map_err(cfg_err)?;
        let plate = scenarios.iter().find_map(|s| match &s.scenario.controller {
            ControllerSpec::Hmpc(c) if s.scenario.model.nx() == 8 && s.scenario.model.nu() == 2 => Some(c.clone()),
            _ => None,
        });
        match plate {
            Some(c) => opts.hmpc = c,
            None => println!("WARN no plate HMPC controller in the config; closed-loop checks use the default tuning"),
        }
    }
    let mut failed = 0;
    for check in run_suite(&opts) {
        println!("{check}");
        failed += usize::from(!check.passed);
    }
    println!("{failed} failed");
    Ok(if failed == 0 { 0 } else { EXIT_FAILURE })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config, out, tol, seed } => cmd_run(config, out, Overrides { tol: *tol, seed: *seed }),
        Command::Sweep { config, out, tol } => cmd_sweep(config, out, Overrides { tol: *tol, seed: None }),
        Command::Verify { config, tol, seed } => cmd_verify(config.as_deref(), *tol, *seed),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}

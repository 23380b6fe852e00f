use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use qsync_core::dynamics::{self, IdentityStats, PreflightReport, Solver};
use qsync_core::experiments::{self, IDENTITY_C};
use qsync_core::io::{self, OutputFormat};
use qsync_core::reduced::{self, RegimeDescriptor};
use qsync_core::{observables, QsyncError};

const EXIT_ASSERTION: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_SOLVER: u8 = 3;

#[derive(Parser)]
#[command(name = "qsync", version, about = "Schrodinger-Lohe synchronization simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the system described by a JSON config.
    Run {
        config: PathBuf,
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Run a catalog scenario and check its assertions.
    Scenario {
        name: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory (default: out/<name>).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the scenario catalog.
    ListScenarios,
    /// Compare the split-step solver against the method-of-lines oracle.
    OracleCheck { config: PathBuf },
    /// Integrate the two-oscillator reduced system.
    Reduced { params: PathBuf },
}

/// Failure carrying its exit code.
struct Fail(u8, String);

impl Fail {
    fn usage(e: impl ToString) -> Self {
        Fail(EXIT_USAGE, e.to_string())
    }

    fn solver(e: impl ToString) -> Self {
        Fail(EXIT_SOLVER, e.to_string())
    }
}

fn classify_error(e: QsyncError) -> Fail {
    match e {
        QsyncError::Config { .. }
        | QsyncError::Parse { .. }
        | QsyncError::Checkpoint(_)
        | QsyncError::UnknownScenario(_)
        | QsyncError::Io(_) => Fail::usage(e),
        other => Fail::solver(other),
    }
}

fn read_text(path: &Path) -> Result<String, Fail> {
    fs::read_to_string(path).map_err(|e| Fail::usage(format!("cannot read {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Fail> {
    let text = serde_json::to_string_pretty(value).map_err(Fail::solver)?;
    io::write_atomic(path, text.as_bytes()).map_err(Fail::usage)
}

fn create_dir(dir: &Path) -> Result<(), Fail> {
    fs::create_dir_all(dir).map_err(|e| Fail::usage(format!("cannot create {}: {e}", dir.display())))
}

fn warn_preflight(pre: &PreflightReport) {
    for c in pre.warnings() {
        match c.value {
            Some(v) => eprintln!("preflight warning: {} = {v:.6e} ({})", c.name, c.detail),
            None => eprintln!("preflight warning: {} ({})", c.name, c.detail),
        }
    }
}

#[derive(Serialize)]
struct RunReport {
    passed: bool,
    start_time: f64,
    end_time: f64,
    steps: usize,
    threads: usize,
    preflight: PreflightReport,
    identity: IdentityStats,
    identity_threshold: f64,
    max_boundary_amplitude: f64,
    error: Option<String>,
}

fn cmd_run(config: &Path, resume: Option<&Path>) -> Result<(), Fail> {
    let cfg = io::parse_config(&read_text(config)?).map_err(Fail::usage)?;
    let (mut state, mut params) = cfg.build().map_err(classify_error)?;
    if let Some(ck) = resume {
        let bytes = fs::read(ck).map_err(|e| Fail::usage(format!("cannot read {}: {e}", ck.display())))?;
        let restored = io::restore(&bytes).map_err(Fail::usage)?;
        if restored.grid() != state.grid() || restored.n() != state.n() {
            return Err(Fail::usage("checkpoint grid or oscillator count differs from the config"));
        }
        state = restored;
        let remaining = params.t_final - state.time;
        if remaining < 0.5 * params.dt {
            return Err(Fail::usage(format!(
                "checkpoint time {} is already at or past t_final {}",
                state.time, params.t_final
            )));
        }
        params.t_final = remaining;
    }
    let pre = dynamics::preflight(&state, &params).map_err(classify_error)?;
    warn_preflight(&pre);

    let threads = io::threads_from_env();
    let solver = Solver::new(*state.grid(), &params)
        .and_then(|s| s.with_threads(threads))
        .map_err(classify_error)?;
    let start_time = state.time;
    let result = dynamics::run_with(&solver, &state, cfg.output.sample_every);
    let (traj, error) = match result {
        Ok(t) => (Some(t), None),
        Err(e) => (e.partial, Some(e.source)),
    };

    let dir = PathBuf::from(&cfg.output.directory);
    create_dir(&dir)?;
    let threshold = IDENTITY_C * params.dt * params.dt;
    let (identity, edge, end_time) = traj
        .as_ref()
        .map(|t| (t.identity, t.max_boundary_amplitude, t.final_state.time))
        .unwrap_or((IdentityStats::default(), f64::NAN, start_time));
    if let Some(t) = &traj {
        let dim = state.grid().dim();
        if cfg.output.formats.contains(&OutputFormat::Csv) {
            let csv = io::write_trajectory(&t.frames, state.n(), dim);
            io::write_atomic(&dir.join("trajectory.csv"), csv.as_bytes()).map_err(Fail::usage)?;
        }
        if error.is_none() && cfg.output.formats.contains(&OutputFormat::Checkpoint) {
            io::write_atomic(&dir.join("final.qsyn"), &io::checkpoint(&t.final_state)).map_err(Fail::usage)?;
        }
    }
    let identity_ok = identity.max_mass_residual <= threshold && identity.max_zeta_residual <= threshold;
    let report = RunReport {
        passed: error.is_none() && identity_ok,
        start_time,
        end_time,
        steps: params.steps(),
        threads,
        preflight: pre,
        identity,
        identity_threshold: threshold,
        max_boundary_amplitude: edge,
        error: error.as_ref().map(|e| e.to_string()),
    };
    write_json(&dir.join("report.json"), &report)?;

    if let Some(e) = error {
        return Err(Fail::solver(e));
    }
    if !identity_ok {
        return Err(Fail(
            EXIT_ASSERTION,
            format!(
                "identity residuals (mass {:.3e}, zeta {:.3e}) exceed {:.3e}",
                identity.max_mass_residual, identity.max_zeta_residual, threshold
            ),
        ));
    }
    Ok(())
}

fn cmd_scenario(name: &str, seed: u64, out: Option<PathBuf>) -> Result<(), Fail> {
    let grid = qsync_core::GridSpec::default_1d();
    let sc = experiments::build(name, seed, grid).map_err(classify_error)?;
    warn_preflight(&dynamics::preflight(&sc.initial, &sc.params).map_err(classify_error)?);
    let mut outcome = experiments::run_built(&sc).map_err(classify_error)?;
    let dir = out.unwrap_or_else(|| Path::new("out").join(name));
    io::write_scenario_outputs(&dir, &mut outcome).map_err(Fail::usage)?;
    for a in &outcome.report.assertions {
        eprintln!(
            "{} {}: measured {:.6e}, threshold {:.6e} ({})",
            if a.passed { "PASS" } else { "FAIL" },
            a.name,
            a.measured,
            a.threshold,
            a.detail
        );
    }
    if let Some(e) = &outcome.report.error {
        return Err(Fail::solver(e));
    }
    if !outcome.report.passed {
        return Err(Fail(EXIT_ASSERTION, format!("scenario {name} failed its assertions")));
    }
    Ok(())
}

fn cmd_list() {
    for s in experiments::CATALOG {
        println!("{}", s.name);
    }
}

#[derive(Serialize)]
struct OracleReport {
    passed: bool,
    steps: usize,
    dt: f64,
    max_field_deviation: f64,
    tolerance: f64,
}

const ORACLE_TOLERANCE: f64 = 1e-4;

fn cmd_oracle(config: &Path) -> Result<(), Fail> {
    let cfg = io::parse_config(&read_text(config)?).map_err(Fail::usage)?;
    let (state, params) = cfg.build().map_err(classify_error)?;
    let solver = Solver::new(*state.grid(), &params)
        .and_then(|s| s.with_threads(io::threads_from_env()))
        .map_err(classify_error)?;
    let (mut a, mut b) = (state.clone(), state);
    let steps = params.steps();
    for _ in 0..steps {
        a = solver.step(&a).map_err(Fail::solver)?;
        b = solver.oracle_step(&b).map_err(Fail::solver)?;
    }
    let dev = a
        .fields
        .iter()
        .zip(&b.fields)
        .flat_map(|(x, y)| x.values().iter().zip(y.values()).map(|(p, q)| (p - q).norm()))
        .fold(0.0f64, f64::max);
    let report = OracleReport {
        passed: dev < ORACLE_TOLERANCE,
        steps,
        dt: params.dt,
        max_field_deviation: dev,
        tolerance: ORACLE_TOLERANCE,
    };
    let dir = PathBuf::from(&cfg.output.directory);
    create_dir(&dir)?;
    write_json(&dir.join("oracle_report.json"), &report)?;
    println!("max field deviation {dev:.6e} (tolerance {ORACLE_TOLERANCE:.1e})");
    if report.passed {
        Ok(())
    } else {
        Err(Fail(EXIT_ASSERTION, "split-step and oracle disagree".into()))
    }
}

#[derive(Serialize)]
struct ReducedReport {
    lambda_cap: f64,
    regime: RegimeDescriptor,
    detected: String,
    final_state: reduced::ReducedState,
}

fn cmd_reduced(path: &Path) -> Result<(), Fail> {
    let cfg = io::parse_reduced_config(&read_text(path)?).map_err(Fail::usage)?;
    let s0 = cfg.initial.state();
    let samples = reduced::integrate_reduced(&s0, &cfg.params, cfg.dt, cfg.t_final, cfg.sample_every)
        .map_err(Fail::solver)?;
    let last = *samples.last().expect("integration yields at least the initial state");
    let lambda_cap =
        reduced::lambda_param(cfg.params.omega.abs(), cfg.params.k, last.lambda1, last.lambda2).map_err(Fail::solver)?;
    let regime = reduced::classify(lambda_cap, cfg.params.omega.abs()).map_err(Fail::solver)?;
    let z: Vec<_> = samples.iter().map(|s| (s.time, s.z)).collect();
    let detected = match observables::detect_regime(&z, 0.5).map_err(Fail::solver)? {
        observables::Regime::Converged(_) => "converged",
        observables::Regime::Periodic(_) => "periodic",
        observables::Regime::Undetermined => "undetermined",
    };
    let dir = PathBuf::from(&cfg.directory);
    create_dir(&dir)?;
    let frames: Vec<_> = samples.iter().map(io::reduced_frame).collect();
    let csv = io::write_trajectory(&frames, 2, 1);
    io::write_atomic(&dir.join("reduced_trajectory.csv"), csv.as_bytes()).map_err(Fail::usage)?;
    let report = ReducedReport {
        lambda_cap,
        regime,
        detected: detected.into(),
        final_state: last,
    };
    println!("Lambda = {lambda_cap:.6}, regime {}, detected {detected}", report.regime.number());
    write_json(&dir.join("reduced_report.json"), &report)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            if code == 0 {
                print!("{e}");
            } else {
                eprint!("{e}");
            }
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Run { config, resume } => cmd_run(&config, resume.as_deref()),
        Command::Scenario { name, seed, out } => cmd_scenario(&name, seed, out),
        Command::ListScenarios => {
            cmd_list();
            Ok(())
        }
        Command::OracleCheck { config } => cmd_oracle(&config),
        Command::Reduced { params } => cmd_reduced(&params),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Fail(code, msg)) => {
            eprintln!("qsync: {msg}");
            ExitCode::from(code)
        }
    }
}

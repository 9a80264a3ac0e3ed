//! `shm-opt`: staircase modulation synthesis from JSON run configurations.
//!
//! Exit codes: 0 success, 1 configuration or input error, 2 numerical
//! failure (non-convergence, or a report that does not verify).

mod verify;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use shm_core::baseline::{enumerate_waveforms, scan_csv, solvable_set_scan, WaveformCandidate};
use shm_core::problem::{preset, ProblemSpec, PRESETS};
use shm_core::signal::{fourier_closed_form, Coefficients, HarmonicSpec, StaircaseSignal};
use shm_core::solver::{solve, SolveReport};
use shm_core::sweep::{continuity_report, policy_csv, run_sweep, SweepSpec};
use shm_core::{Error, Result};

const SEED_VAR: &str = "SHM_OPT_SEED";

#[derive(Parser)]
#[command(name = "shm-opt", version, about = "Staircase modulation synthesis by penalized optimal control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one problem; writes report.json, control.csv and signal.json.
    Solve(RunArgs),
    /// Sweep the modulation index; writes sweep.json, policy.csv and
    /// continuity.json.
    Sweep(RunArgs),
    /// Fixed-waveform angle fits over a target list; writes scan.csv and
    /// scan.json.
    Baseline(RunArgs),
    /// Re-check a solve report; writes verification.json.
    Verify {
        /// A report.json written by `solve`.
        report: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Fourier coefficients of a staircase signal JSON; writes spectrum.json.
    Fourier {
        /// A signal.json written by `solve`, or any staircase signal JSON.
        signal: PathBuf,
        /// Cosine and sine indices (odd); 1, 3, …, 49 by default.
        #[arg(long, value_delimiter = ',')]
        harmonics: Option<Vec<u32>>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// A built-in configuration instead of a file.
    #[arg(long)]
    preset: Option<String>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads; overrides the config.
    #[arg(long)]
    workers: Option<usize>,
}

/// How a command that ran to the end turned out.
enum Status {
    Success,
    Numerical(String),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(Status::Success) => ExitCode::SUCCESS,
        Ok(Status::Numerical(message)) => {
            eprintln!("{message}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> Result<Status> {
    match command {
        Command::Solve(args) => {
            let spec = load(&args)?;
            in_pool(spec.workers, || cmd_solve(&spec, &args.out))
        }
        Command::Sweep(args) => {
            let spec = load(&args)?;
            in_pool(spec.workers, || cmd_sweep(&spec, &args.out))
        }
        Command::Baseline(args) => {
            let spec = load(&args)?;
            in_pool(spec.workers, || cmd_baseline(&spec, &args.out))
        }
        Command::Verify { report, out } => cmd_verify(&report, &out),
        Command::Fourier { signal, harmonics, out } => cmd_fourier(&signal, harmonics, &out),
    }
}

/// Config file or preset, with the command-line and environment overrides
/// applied and the result validated.
fn load(args: &RunArgs) -> Result<ProblemSpec> {
    let mut spec = match (&args.config, &args.preset) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).map_err(|e| config_error("<file>", format!("{}: {e}", path.display())))?;
            ProblemSpec::from_json(&text)?
        }
        (None, Some(name)) => preset(name).map_err(|_| config_error("--preset", format!("unknown preset `{name}`; known: {}", PRESETS.join(", "))))?,
        (None, None) => return Err(config_error("--config", "give --config or --preset")),
    };
    if let Ok(value) = std::env::var(SEED_VAR) {
        spec.seed = value
            .trim()
            .parse()
            .map_err(|_| config_error(SEED_VAR, format!("`{value}` is not an unsigned integer")))?;
    }
    if args.workers.is_some() {
        spec.workers = args.workers;
    }
    spec.validate()?;
    Ok(spec)
}

fn config_error(key: &str, message: impl Into<String>) -> Error {
    Error::Config {
        key: key.into(),
        message: message.into(),
    }
}

/// Runs `f` on a pool of `workers` threads, or on the global pool.
fn in_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| config_error("workers", e.to_string()))?
            .install(f),
        None => f(),
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), contents)?;
    Ok(())
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write(dir, name, &text)
}

fn cmd_solve(spec: &ProblemSpec, out: &Path) -> Result<Status> {
    let problem = spec.problem()?;
    let report = solve(&problem, None, &spec.solver)?;
    write_json(out, "report.json", &report)?;
    write(out, "control.csv", &report.control.to_csv())?;
    write_json(out, "signal.json", &report.extracted)?;
    println!(
        "converged {} after {} iterations; residual {:e}; snap fraction {}; switches {}",
        report.converged,
        report.iterations,
        report.terminal_residual,
        report.snap_fraction,
        report.extracted.as_ref().map_or(0, StaircaseSignal::switches)
    );
    Ok(if report.converged {
        Status::Success
    } else {
        Status::Numerical(format!(
            "not converged: stationarity {:e} after {} iterations (tol {:e})",
            report.stationarity, report.iterations, spec.solver.tol
        ))
    })
}

fn cmd_sweep(spec: &ProblemSpec, out: &Path) -> Result<Status> {
    let sweep = SweepSpec::from_config(spec)?;
    let result = run_sweep(&sweep)?;
    write_json(out, "sweep.json", &result)?;
    write(out, "policy.csv", &policy_csv(&result))?;
    if result.rows.len() >= 2 {
        write_json(out, "continuity.json", &continuity_report(&[&result])?)?;
    }
    let unreliable = result.unreliable();
    println!(
        "{} rows, {} converged; unreliable extraction at m = {:?}",
        result.rows.len(),
        result.rows.iter().filter(|r| r.converged()).count(),
        unreliable
    );
    let failed: Vec<f64> = result.rows.iter().filter(|r| !r.converged()).map(|r| r.m).collect();
    Ok(if failed.is_empty() {
        Status::Success
    } else {
        Status::Numerical(format!("rows not converged at m = {failed:?}"))
    })
}

#[derive(Serialize)]
struct ScanOutput<'a> {
    waveforms: Vec<&'a [f64]>,
    targets: &'a [Coefficients],
    cells: &'a [shm_core::baseline::ScanCell],
}

fn cmd_baseline(spec: &ProblemSpec, out: &Path) -> Result<Status> {
    let config = spec.baseline.as_ref().ok_or_else(|| config_error("baseline", "missing"))?;
    let waveforms = match &config.waveforms {
        Some(list) => list
            .iter()
            .map(|levels| WaveformCandidate::new(&spec.levels, levels.clone()))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| config_error("baseline.waveforms", e.to_string()))?,
        None => enumerate_waveforms(&spec.levels, config.switches, config.budget)?,
    };
    let mut targets = config
        .m_values
        .iter()
        .map(|&m| spec.pattern_targets(m))
        .collect::<Result<Vec<_>>>()?;
    targets.extend(config.targets.iter().cloned());
    if targets.is_empty() {
        return Err(config_error("baseline", "no targets: give `m_values` with a `pattern`, or `targets`"));
    }
    let cells = solvable_set_scan(&waveforms, &spec.harmonics, &targets, config.restarts, spec.seed, config.solved_tol)?;
    write(out, "scan.csv", &scan_csv(&cells))?;
    write_json(
        out,
        "scan.json",
        &ScanOutput {
            waveforms: waveforms.iter().map(WaveformCandidate::levels).collect(),
            targets: &targets,
            cells: &cells,
        },
    )?;
    println!(
        "{} waveforms x {} targets, {} solved",
        waveforms.len(),
        targets.len(),
        cells.iter().filter(|c| c.result.solved).count()
    );
    Ok(Status::Success)
}

fn cmd_verify(path: &Path, out: &Path) -> Result<Status> {
    let text = fs::read_to_string(path).map_err(|e| config_error("<report>", format!("{}: {e}", path.display())))?;
    let report: SolveReport = serde_json::from_str(&text).map_err(|e| config_error("<report>", e.to_string()))?;
    let verification = verify::verify(&report)?;
    write_json(out, "verification.json", &verification)?;
    println!("all_pass {}", verification.all_pass);
    Ok(if verification.all_pass {
        Status::Success
    } else {
        Status::Numerical("verification failed; see verification.json".into())
    })
}

#[derive(Serialize)]
struct Spectrum {
    harmonics: HarmonicSpec,
    coefficients: Coefficients,
}

fn cmd_fourier(path: &Path, harmonics: Option<Vec<u32>>, out: &Path) -> Result<Status> {
    let text = fs::read_to_string(path).map_err(|e| config_error("<signal>", format!("{}: {e}", path.display())))?;
    let signal: Option<StaircaseSignal> = serde_json::from_str(&text).map_err(|e| config_error("<signal>", e.to_string()))?;
    let signal = signal.ok_or_else(|| config_error("<signal>", "the file holds no signal (extraction found no level)"))?;
    let indices = harmonics.unwrap_or_else(|| (1..50).step_by(2).collect());
    let harmonics = HarmonicSpec::symmetric(&indices).map_err(|e| config_error("--harmonics", e.to_string()))?;
    let coefficients = fourier_closed_form(&signal, &harmonics);
    write_json(out, "spectrum.json", &Spectrum { harmonics, coefficients })?;
    Ok(Status::Success)
}

//! Command-line front end: configuration loading, the five subcommands and
//! their on-disk artifacts. `main.rs` only parses arguments and calls
//! [`execute`].

pub mod commands;
pub mod config;
pub mod svg;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

pub use commands::{
    cmd_check, cmd_plot, cmd_simulate, cmd_sweep, cmd_verify, read_series_csv, CheckOutcome, SimulateOutcome,
    SweepCell, VerifyCheck, VerifyReport,
};
pub use config::RunConfig;

#[derive(Debug)]
pub enum CliError {
    /// Bad configuration or arguments; exit code 1.
    Input(String),
    /// The solver or an I/O operation failed; exit code 1.
    Runtime(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "input error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<chemostab::Error> for CliError {
    fn from(e: chemostab::Error) -> Self {
        match e {
            chemostab::Error::InvalidParameter { .. }
            | chemostab::Error::InvalidGrid(_)
            | chemostab::Error::InvalidInitialData(_)
            | chemostab::Error::FieldSizeMismatch { .. }
            | chemostab::Error::Checkpoint(_) => CliError::Input(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

/// Which hypothesis `check` requires for exit code 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Requirement {
    WeakCompetition,
    /// Either persistence branch.
    Persistence,
    PersistenceGeneral,
    PersistenceEqualChi,
    /// Either stabilization branch.
    Stabilization,
    StabilizationGeneral,
    StabilizationEqualChi,
}

impl Requirement {
    pub fn as_str(self) -> &'static str {
        match self {
            Requirement::WeakCompetition => "weak_competition",
            Requirement::Persistence => "persistence",
            Requirement::PersistenceGeneral => "persistence_general",
            Requirement::PersistenceEqualChi => "persistence_equal_chi",
            Requirement::Stabilization => "stabilization",
            Requirement::StabilizationGeneral => "stabilization_general",
            Requirement::StabilizationEqualChi => "stabilization_equal_chi",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "chemostab", version, about = "Two-species chemotaxis-competition simulator and verification harness")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run configuration (TOML, or JSON with a .json extension).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides `stepper.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for `sweep` (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate the theorem hypotheses and predicted bounds.
    Check {
        #[arg(long, value_enum, default_value_t = Requirement::Stabilization)]
        require: Requirement,
    },
    /// Run one simulation and write its artifacts.
    Simulate {
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Run a K x K grid over (chi1, chi2) and write a region map.
    Sweep,
    /// Run the oracle and inequality suites.
    Verify {
        /// Replace the positive reaction step by clipped explicit Euler.
        #[arg(long)]
        inject_clipping: bool,
    },
    /// Redraw the charts from a series CSV.
    Plot {
        /// Defaults to `<out>/series.csv`.
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

/// `println!` that ignores a closed stdout (e.g. output piped into `head`).
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::Input("--config is required".into()))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.stepper.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    Ok(cfg)
}

/// Runs the parsed command and returns the process exit code: 0 on
/// success, 2 when a required condition or a verification check fails,
/// 1 on any error.
pub fn execute(cli: &Cli) -> i32 {
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{e}");
            1
        }
    }
}

fn dispatch(cli: &Cli) -> Result<i32, CliError> {
    match &cli.command {
        Command::Check { require } => {
            let cfg = load_config(cli)?;
            let outcome = cmd_check(&cfg, *require)?;
            say!("{}", outcome.json);
            if cli.out.is_some() {
                std::fs::create_dir_all(&cfg.output.dir)?;
                std::fs::write(cfg.output.dir.join("check.json"), &outcome.json)?;
            }
            Ok(if outcome.satisfied { 0 } else { 2 })
        }
        Command::Simulate { resume } => {
            let cfg = load_config(cli)?;
            let outcome = cmd_simulate(&cfg, resume.as_deref())?;
            say!(
                "{}: t = {}, steps = {}, distance = {:e}; artifacts in {}",
                outcome.classification,
                outcome.t_final,
                outcome.steps,
                outcome.final_distance,
                cfg.output.dir.display()
            );
            Ok(0)
        }
        Command::Sweep => {
            let cfg = load_config(cli)?;
            let cells = cmd_sweep(&cfg, cli.threads)?;
            say!("{} cells written to {}", cells.len(), cfg.output.dir.join("sweep.csv").display());
            Ok(0)
        }
        Command::Verify { inject_clipping } => {
            let cfg = load_config(cli)?;
            let report = cmd_verify(&cfg, *inject_clipping)?;
            for c in &report.checks {
                say!("{:<28} {:<4} {}", c.name, c.status, c.detail);
            }
            if cli.out.is_some() {
                std::fs::create_dir_all(&cfg.output.dir)?;
                std::fs::write(cfg.output.dir.join("verify.json"), report.to_json())?;
            }
            Ok(if report.all_passed { 0 } else { 2 })
        }
        Command::Plot { input } => {
            let out = match (&cli.out, &cli.config) {
                (Some(o), _) => o.clone(),
                (None, Some(_)) => load_config(cli)?.output.dir,
                (None, None) => PathBuf::from("out"),
            };
            let input = input.clone().unwrap_or_else(|| out.join("series.csv"));
            for p in cmd_plot(&input, &out)? {
                say!("{}", p.display());
            }
            Ok(0)
        }
    }
}

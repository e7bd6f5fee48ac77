//! Command-line front end.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use sysintel::presets;

use crate::config::{load_config, ExperimentConfig, PolicyKind};
use crate::experiment::{compare_csv, run_experiment, RunOptions};
use crate::plot::PLOT_SCRIPT;
use crate::sweep::{bound_csv, parse_grid, single_app_csv, sweep_bound, sweep_single_app, SingleAppMode};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "sysintel", version, about = "Intelligence bounds and pre-service controller experiments")]
pub struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides `experiment.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
    /// Write one trace CSV per run under `<out-dir>/traces`.
    #[arg(long, global = true)]
    pub traces: bool,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Mode {
    Symmetric,
    FixedDelta,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sweep the intelligence bound over budget rates.
    Bound {
        /// Preset to sweep when no config is given.
        #[arg(long, default_value = presets::SETTING_A)]
        preset: String,
        /// `start:stop:step` or a comma list; defaults to the config's
        /// `experiment.rho`, else 0.5:6:0.25.
        #[arg(long)]
        rho: Option<String>,
    },
    /// Sweep the single-application bound and entropy rate over epsilon.
    SingleApp {
        #[arg(long, value_enum, default_value = "symmetric")]
        mode: Mode,
        #[arg(long, default_value_t = 0.6)]
        delta: f64,
        #[arg(long, default_value = "0.1:0.9:0.05")]
        grid: String,
        /// Budget rate; defaults to half the maximum useful budget.
        #[arg(long)]
        rho: Option<f64>,
    },
    /// Run every configured policy cell and write `summary.csv`.
    Simulate,
    /// Run BISC and LBISC side by side and write `summary.csv` and `compare.csv`.
    Compare,
}

#[derive(Debug)]
enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            EXIT_VALIDATION
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            EXIT_RUNTIME
        }
    }
}

fn config(cli: &Cli) -> Result<Option<ExperimentConfig>, Failure> {
    let Some(path) = &cli.config else {
        return Ok(None);
    };
    let mut cfg = load_config(path).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?;
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    Ok(Some(cfg))
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), Failure> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, contents)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    let cfg = config(cli)?;
    let out = &cli.out_dir;
    match &cli.command {
        Command::Bound { preset, rho } => {
            let (scenario, cfg_grid) = match &cfg {
                Some(c) => (c.scenario.clone(), c.rho_list.clone()),
                None => (
                    presets::by_name(preset)
                        .ok_or_else(|| Failure::Validation(format!("unknown preset {preset:?}")))?,
                    Vec::new(),
                ),
            };
            let grid = match rho {
                Some(spec) => parse_grid(spec).map_err(Failure::Validation)?,
                None if !cfg_grid.is_empty() => cfg_grid,
                None => parse_grid("0.5:6:0.25").expect("default grid parses"),
            };
            if let Some(r) = grid.iter().find(|r| r.is_nan() || **r <= 0.0) {
                return Err(Failure::Validation(format!("rho grid values must be positive (got {r})")));
            }
            let points = sweep_bound(&scenario, &grid).map_err(|e| Failure::Runtime(e.to_string()))?;
            write(out, "bound.csv", &bound_csv(&points))?;
        }
        Command::SingleApp { mode, delta, grid, rho } => {
            let grid = parse_grid(grid).map_err(Failure::Validation)?;
            if let Some(e) = grid.iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
                return Err(Failure::Validation(format!("epsilon grid must lie in (0, 1) (got {e})")));
            }
            let mode = match mode {
                Mode::Symmetric => SingleAppMode::Symmetric,
                Mode::FixedDelta => SingleAppMode::FixedDelta(*delta),
            };
            let points = sweep_single_app(&grid, mode, *rho).map_err(|e| Failure::Validation(e.to_string()))?;
            write(out, "single_app.csv", &single_app_csv(&points))?;
        }
        Command::Simulate | Command::Compare => {
            let mut cfg = cfg.ok_or_else(|| Failure::Validation("--config is required".into()))?;
            let compare = matches!(cli.command, Command::Compare);
            if compare {
                cfg.policies = vec![PolicyKind::Bisc, PolicyKind::Lbisc];
            }
            let opts = RunOptions {
                jobs: cli.jobs,
                traces: cli.traces.then(|| out.join("traces")),
            };
            let result = run_experiment(&cfg, &opts)?;
            write(out, "summary.csv", &result.summary_csv())?;
            if compare {
                write(out, "compare.csv", &compare_csv(&result))?;
            }
            let failed: Vec<String> = result
                .failed()
                .map(|c| format!("{} V={}: {}", c.cell.policy.name(), c.cell.v, c.error.as_deref().unwrap_or("")))
                .collect();
            write(out, "plot.py", PLOT_SCRIPT)?;
            if !failed.is_empty() {
                return Err(Failure::Runtime(format!("{} cell(s) failed: {}", failed.len(), failed.join("; "))));
            }
            return Ok(());
        }
    }
    write(out, "plot.py", PLOT_SCRIPT)
}

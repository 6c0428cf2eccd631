//! Subcommands behind the `pinn-resample` binary.

mod config;
mod verify;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use log::{error, info};
use thiserror::Error;

use crate::eval::{collect_runs, emit, summarize, EvalError, GroundTruth};
use crate::pde::{reference, GridError, PdeProblem, ProblemKind, BURGERS_NU};
use crate::trainer::{run_in_dir, ExperimentConfig, RunOptions, RunResult, TrainError};

pub use config::{parse_config, ConfigError, Origin, ParsedConfig, KEYS};
pub use verify::{
    closed_form_check, constraint_check, gradient_check, hammersley_check, hvp_check, identity_reduction_check,
    influence_oracle_check, input_jet_check, pmf_check, run_checks, Check,
};

/// Environment variable naming the directory of reference grids.
pub const DATA_DIR_ENV: &str = "PINN_DATA_DIR";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Config { path: String, source: ConfigError },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// `PINN_DATA_DIR`, else `./data`.
pub fn data_dir() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV).map_or_else(|| PathBuf::from("data"), PathBuf::from)
}

/// Reads and parses `path` (an empty config when `None`) with `overrides`.
pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<ParsedConfig, CliError> {
    let (label, text) = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|source| CliError::Io { path: p.display().to_string(), source })?;
            (p.display().to_string(), text)
        }
        None => ("--set".to_string(), String::new()),
    };
    parse_config(&text, overrides).map_err(|source| CliError::Config { path: label, source })
}

/// Shared execution settings.
#[derive(Clone, Debug)]
pub struct Context {
    pub out: PathBuf,
    pub data_dir: PathBuf,
    pub jobs: usize,
    pub options: RunOptions,
}

/// Result of a sweep: one entry per cell, in cell order.
#[derive(Debug)]
pub struct SweepOutcome {
    pub cells: Vec<(ExperimentConfig, Result<RunResult, TrainError>)>,
    pub report: Result<Vec<PathBuf>, EvalError>,
}

impl SweepOutcome {
    /// Cells that errored or ended with a failed record.
    pub fn failures(&self) -> usize {
        self.cells.iter().filter(|(_, r)| r.as_ref().map_or(true, RunResult::failed)).count()
    }

    pub fn success(&self) -> bool {
        self.failures() == 0 && self.report.is_ok()
    }
}

/// Runs the single configured cell.
pub fn cmd_run(parsed: &ParsedConfig, ctx: &Context) -> Result<RunResult, CliError> {
    let cells = parsed.cells();
    if cells.len() != 1 {
        return Err(CliError::Usage(format!(
            "the config describes {} runs; use `sweep` for more than one method or seed",
            cells.len()
        )));
    }
    let truth = GroundTruth::locate(&PdeProblem::new(cells[0].problem), &ctx.data_dir)?;
    Ok(run_in_dir(&cells[0], &truth, &ctx.out, ctx.options)?)
}

/// Runs every (method, seed) cell on up to `ctx.jobs` threads, then writes
/// the report into `ctx.out`.
pub fn cmd_sweep(parsed: &ParsedConfig, ctx: &Context) -> Result<SweepOutcome, CliError> {
    let cells = parsed.cells();
    let truth = GroundTruth::locate(&PdeProblem::new(parsed.base.problem), &ctx.data_dir)?;
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<RunResult, TrainError>>>> =
        Mutex::new((0..cells.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..ctx.jobs.clamp(1, cells.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(cell) = cells.get(i) else { break };
                info!("cell {}/{}: {} seed {}", i + 1, cells.len(), cell.method, cell.seed);
                let result = run_in_dir(cell, &truth, &ctx.out, ctx.options);
                if let Err(e) = &result {
                    error!("{} seed {}: {e}", cell.method, cell.seed);
                }
                results.lock().expect("no panics while holding the lock")[i] = Some(result);
            });
        }
    });
    let results = results.into_inner().expect("workers joined");
    let cells: Vec<_> = cells.into_iter().zip(results.into_iter().map(|r| r.expect("every cell ran"))).collect();
    let report = cmd_report(&ctx.out);
    Ok(SweepOutcome { cells, report })
}

/// Aggregates every run under `root` and writes the summary files there.
pub fn cmd_report(root: &Path) -> Result<Vec<PathBuf>, EvalError> {
    let runs = collect_runs(root)?;
    emit(&summarize(runs), root)
}

/// Runs [`run_checks`], printing one line per check; true when all pass.
pub fn cmd_verify(out: &mut impl Write) -> std::io::Result<bool> {
    let checks = run_checks();
    for c in &checks {
        writeln!(out, "{c}")?;
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    writeln!(out, "{} checks, {failed} failed", checks.len())?;
    Ok(failed == 0)
}

/// Writes the Burgers and Allen–Cahn reference grids into `dir`.
pub fn cmd_gen_data(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.display().to_string(), source })?;
    let mut written = Vec::new();
    for kind in [ProblemKind::Burgers, ProblemKind::AllenCahn] {
        let path = dir.join(kind.ground_truth_file().expect("gridded problem"));
        info!("writing {}", path.display());
        let grid = match kind {
            ProblemKind::Burgers => reference::burgers_grid(BURGERS_NU, 256, 100),
            _ => reference::allen_cahn_grid(1e-3, 5.0, 512, 201, 4, 50),
        };
        grid.save(&path)?;
        written.push(path);
    }
    Ok(written)
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pinn_resample::cli::{self, CliError, Context};
use pinn_resample::trainer::RunOptions;

#[derive(Parser)]
#[command(name = "pinn-resample", version, about = "PINN training with influence-based collocation resampling")]
struct Args {
    /// Flat `key = value` experiment file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set cycles=5`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output root for run directories and reports (default `runs`); for
    /// `gen-data`, the grid directory (default `$PINN_DATA_DIR` or `data`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Concurrent sweep cells.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Zero the wall-clock column so records are byte-reproducible.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Recompute runs even when a finished identical run exists.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration.
    Run,
    /// Train every (method, seed) cell, then report.
    Sweep,
    /// Summarize the runs under --out.
    Report,
    /// Run the oracle self-checks.
    Verify,
    /// Write reference grids for Burgers and Allen-Cahn.
    GenData,
}

fn context(args: &Args) -> Context {
    Context {
        out: args.out.clone().unwrap_or_else(|| PathBuf::from("runs")),
        data_dir: cli::data_dir(),
        jobs: args.jobs.max(1),
        options: RunOptions { deterministic: args.deterministic, force: args.force },
    }
}

fn main_inner(args: Args) -> Result<bool, CliError> {
    let ctx = context(&args);
    match args.command {
        Command::Run => {
            let parsed = cli::load_config(args.config.as_deref(), &args.overrides)?;
            let result = cli::cmd_run(&parsed, &ctx)?;
            let last = result.records.last().expect("at least the initial record");
            println!("{}: cycle {} L2 {:.4e} ({})", result.dir.display(), last.cycle, last.l2_rel_error,
                if result.skipped { "reused" } else { "computed" });
            Ok(!result.failed())
        }
        Command::Sweep => {
            let parsed = cli::load_config(args.config.as_deref(), &args.overrides)?;
            let outcome = cli::cmd_sweep(&parsed, &ctx)?;
            for (cfg, result) in &outcome.cells {
                match result {
                    Ok(r) => println!("{} seed {}: {}{}", cfg.method, cfg.seed,
                        if r.failed() { "failed" } else { "ok" }, if r.skipped { " (reused)" } else { "" }),
                    Err(e) => println!("{} seed {}: error: {e}", cfg.method, cfg.seed),
                }
            }
            match &outcome.report {
                Ok(paths) => paths.iter().for_each(|p| println!("wrote {}", p.display())),
                Err(e) => eprintln!("report: {e}"),
            }
            Ok(outcome.success())
        }
        Command::Report => {
            for p in cli::cmd_report(&ctx.out)? {
                println!("wrote {}", p.display());
            }
            Ok(true)
        }
        Command::Verify => cli::cmd_verify(&mut std::io::stdout().lock())
            .map_err(|source| CliError::Io { path: "stdout".into(), source }),
        Command::GenData => {
            for p in cli::cmd_gen_data(args.out.as_deref().unwrap_or(&ctx.data_dir))? {
                println!("wrote {}", p.display());
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match main_inner(Args::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use normsolve_cli::config::{parse_config, Experiment};
use normsolve_cli::run::{exit_code, run, EXIT_USAGE};

/// Normalized solutions of coupled NLS systems: solves, sweeps and reports.
#[derive(Parser, Debug)]
#[command(name = "normsolve", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `solve.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides `experiment.output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps (falls back to NORMSOLVE_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve for one stationary state.
    Solve,
    /// Regime classification and the radii R0, R1.
    Thresholds,
    /// Scalar ground state of -Δu + u = u^p.
    Profile,
    /// Time evolution and stability of a ground state.
    Evolve,
    /// Mass-collapse ladder in three dimensions.
    Collapse,
    /// Bubble limit along a mass ladder in four dimensions.
    Bubble,
    /// Shrinking coupling ladder in three dimensions.
    Betalimit,
    /// Cut-off bubble estimates.
    Cutoff,
    /// Aggregate a directory of run outputs.
    Report {
        /// Directory of prior runs; defaults to `experiment.results_dir`.
        dir: Option<PathBuf>,
    },
}

impl Command {
    fn experiment(&self) -> Experiment {
        match self {
            Command::Solve => Experiment::Solve,
            Command::Thresholds => Experiment::Thresholds,
            Command::Profile => Experiment::Profile,
            Command::Evolve => Experiment::Evolve,
            Command::Collapse => Experiment::Collapse,
            Command::Bubble => Experiment::Bubble,
            Command::Betalimit => Experiment::Betalimit,
            Command::Cutoff => Experiment::Cutoff,
            Command::Report { .. } => Experiment::Report,
        }
    }
}

fn threads(flag: Option<usize>) -> Result<Option<usize>> {
    let n = match (flag, std::env::var("NORMSOLVE_THREADS")) {
        (Some(n), _) => n,
        (None, Ok(v)) => v.trim().parse().with_context(|| format!("NORMSOLVE_THREADS={v:?} is not a thread count"))?,
        (None, Err(_)) => return Ok(None),
    };
    if n == 0 {
        bail!("thread count must be at least 1");
    }
    Ok(Some(n))
}

/// Usage problems map to exit 1 before anything runs.
fn setup(cli: &Cli) -> Result<(normsolve_cli::RunConfig, PathBuf)> {
    if let Some(n) = threads(cli.threads)? {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let kind = cli.command.experiment();
    let text = match (&cli.config, &cli.command) {
        (Some(path), _) => std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?,
        (None, Command::Report { .. }) => String::new(),
        (None, _) => bail!("{} needs --config", kind.name()),
    };
    let parsed = parse_config(&text, Some(kind))?;
    for w in &parsed.warnings {
        eprintln!("warning: {w}");
    }
    let mut cfg = parsed.config;
    if let Some(seed) = cli.seed {
        cfg.solve.seed = seed;
    }
    if let Command::Report { dir: Some(dir) } = &cli.command {
        cfg.settings.results_dir = Some(dir.clone());
    }
    if kind == Experiment::Report && cfg.settings.results_dir.is_none() {
        bail!("report needs a results directory");
    }
    let out = match (&cli.out, kind) {
        (Some(o), _) => o.clone(),
        (None, Experiment::Report) => cfg.settings.results_dir.clone().unwrap(),
        (None, _) => cfg.output_dir.clone(),
    };
    cfg.output_dir = out.clone();
    Ok((cfg, out))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let (cfg, out) = match setup(&cli) {
        Ok(x) => x,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    match run(&cfg, &out) {
        Ok(status) => {
            if status.code() != 0 {
                eprintln!("{}: not converged, see {}", cfg.experiment.name(), out.display());
            }
            ExitCode::from(status.code())
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

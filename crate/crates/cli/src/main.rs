//! `dmsgd`: run simulations, evaluate bounds, check traces against bounds,
//! and sweep hyperparameters from a flat key-value config file.
//!
//! Exit codes: 0 success, 1 runtime error, 2 invalid input (config, flags,
//! mismatched or truncated files), 3 bound violation.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use log::info;

use dmsgd_core::harness::experiment::render_sweep;
use dmsgd_core::harness::{check_paths, run_sweep, Experiment, HarnessError, RunConfig};

#[derive(Parser)]
#[command(
    name = "dmsgd",
    version,
    about = "Decentralized momentum SGD simulator and bounds checker"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every seed and write per-seed and averaged traces.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Number of seeds (overrides output.seeds).
        #[arg(long)]
        seeds: Option<usize>,
        /// Output directory (overrides output.dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate every applicable bound and write bounds.csv.
    Bounds {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a trace against a bounds file.
    Check {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        bounds: PathBuf,
        /// Relative slack: metric <= (1 + slack) * bound.
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        slack: f64,
        /// Comma-separated bound names to check instead of the defaults.
        #[arg(long, value_delimiter = ',')]
        only: Option<Vec<String>>,
        /// Config the files came from; its hash must match both files.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run a grid of configurations and write sweep_summary.csv.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// File of `sweep.*` lines replacing those in the config.
        #[arg(long)]
        grid: Option<PathBuf>,
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// An error carrying its exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn usage(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: 2,
            error: error.into(),
        }
    }

    fn runtime(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: 1,
            error: error.into(),
        }
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        Self {
            code: e.exit_code() as u8,
            error: e.into(),
        }
    }
}

fn init_logging() {
    let level = match std::env::var("DMSGD_LOG").as_deref() {
        Ok("quiet") => "off",
        Ok("info") => "info",
        Ok("debug") => "debug",
        _ => "warn",
    };
    env_logger::Builder::new().parse_filters(level).init();
}

fn base_dir(config: &Path) -> PathBuf {
    config.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn load_config(path: &Path, grid: Option<&Path>) -> Result<RunConfig, Failure> {
    let mut text = fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))
        .map_err(Failure::usage)?;
    if let Some(grid) = grid {
        let grid_text = fs::read_to_string(grid)
            .with_context(|| format!("reading grid {}", grid.display()))
            .map_err(Failure::usage)?;
        for line in grid_text.lines().map(str::trim) {
            if !(line.is_empty() || line.starts_with('#') || line.starts_with("sweep.")) {
                return Err(Failure::usage(anyhow::anyhow!(
                    "grid file may only set sweep.* keys, got {line:?}"
                )));
            }
        }
        text = text
            .lines()
            .filter(|l| !l.trim_start().starts_with("sweep."))
            .map(|l| format!("{l}\n"))
            .collect::<String>()
            + &grid_text;
    }
    RunConfig::parse(&text)
        .with_context(|| format!("parsing {}", path.display()))
        .map_err(Failure::usage)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { config, seeds, out } => {
            let cfg = load_config(&config, None)?;
            let seeds = seeds.unwrap_or(cfg.output.seeds);
            if seeds == 0 {
                return Err(Failure::usage(anyhow::anyhow!("--seeds must be at least 1")));
            }
            let exp = Experiment::from_config(&cfg, &base_dir(&config))?;
            let out = out.unwrap_or_else(|| cfg.output.dir.clone());
            info!("running {seeds} seed(s) into {}", out.display());
            for path in exp.write_run(&out, seeds)? {
                println!("{}", path.display());
            }
        }
        Command::Bounds { config, out } => {
            let cfg = load_config(&config, None)?;
            let exp = Experiment::from_config(&cfg, &base_dir(&config))?;
            let out = out.unwrap_or_else(|| cfg.output.dir.clone());
            println!("{}", exp.write_bounds(&out)?.display());
        }
        Command::Check {
            trace,
            bounds,
            slack,
            only,
            config,
        } => {
            if !(slack >= 0.0 && slack.is_finite()) {
                return Err(Failure::usage(anyhow::anyhow!(
                    "--slack must be a nonnegative number, got {slack}"
                )));
            }
            let outcome = match check_paths(&trace, &bounds, slack, only.as_deref()) {
                Err(e) => return Err(Failure::usage(anyhow::Error::new(e).context("reading trace or bounds"))),
                Ok(Err(e)) => return Err(Failure::usage(e)),
                Ok(Ok(o)) => o,
            };
            if let Some(config) = config {
                let hash = load_config(&config, None)?.hash();
                let t = dmsgd_core::harness::trace_io::read_trace(&trace).map_err(Failure::usage)?;
                if t.meta.get("config_hash") != Some(&hash) {
                    return Err(Failure::usage(anyhow::anyhow!(
                        "config hash {hash} does not match the trace's {:?}",
                        t.meta.get("config_hash")
                    )));
                }
            }
            let mut violated = outcome.aborted;
            if outcome.aborted {
                println!("trace: aborted before the final iteration");
            }
            for (name, report) in &outcome.results {
                match report.first_violation {
                    None => println!(
                        "{name}: ok ({} rows, max ratio {:.6})",
                        report.checked, report.max_ratio
                    ),
                    Some(v) => {
                        violated = true;
                        println!(
                            "{name}: VIOLATED at k={} (metric {} > bound {} with slack {slack})",
                            v.index + 1,
                            v.metric,
                            v.bound
                        );
                    }
                }
            }
            if violated {
                return Err(Failure {
                    code: 3,
                    error: anyhow::anyhow!("bound violated"),
                });
            }
        }
        Command::Sweep {
            config,
            grid,
            seeds,
            out,
        } => {
            let mut cfg = load_config(&config, grid.as_deref())?;
            if let Some(s) = seeds {
                if s == 0 {
                    return Err(Failure::usage(anyhow::anyhow!("--seeds must be at least 1")));
                }
                cfg.output.seeds = s;
            }
            let rows = run_sweep(&cfg, &base_dir(&config));
            let out = out.unwrap_or_else(|| cfg.output.dir.clone());
            fs::create_dir_all(&out).map_err(Failure::runtime)?;
            let path = out.join("sweep_summary.csv");
            fs::write(&path, render_sweep(&rows).map_err(Failure::runtime)?).map_err(Failure::runtime)?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    init_logging();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

//! `devrate`: config-driven runner for the large-deviations toolkit.
//!
//! Each subcommand reads one TOML config, runs the corresponding task from
//! devrate-core and writes CSV tables, an SVG plot per curve, and a manifest
//! with content hashes into the output directory. Runs are deterministic:
//! the same config and seed produce byte-identical artifacts.
//!
//! Exit codes: 0 success, 2 config or validation error, 3 task failure
//! inside the numerics, 4 I/O error.

mod config;
mod output;
mod selftest;
mod tasks;

use clap::{Parser, Subcommand};
use std::fmt;
use std::path::PathBuf;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Task(String),
    Io(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Task(m) => write!(f, "task error: {m}"),
            CliError::Io(m) => write!(f, "io error: {m}"),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Task(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "devrate",
    version,
    about = "Large-deviations toolkit for ergodic diffusions: confinement reports, \
             SCGF curves, rate functions and rate decompositions"
)]
struct Cli {
    /// TOML experiment config (required by every subcommand except selftest).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// RNG seed; overrides [run].seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides [run].out in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker thread count; overrides [run].threads and DEVRATE_THREADS.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Confinement condition report for the configured model
    Lyapunov,
    /// Scaled cumulant generating function curve
    Scgf,
    /// Rate function by Legendre transform of the SCGF curve
    Rate,
    /// Symmetric/antisymmetric decomposition of one perturbation
    Decompose,
    /// Decomposition across a friction sweep of the kinetic model
    Sweep,
    /// Built-in oracle battery; no config needed
    Selftest,
}

impl Cmd {
    fn name(self) -> &'static str {
        match self {
            Cmd::Lyapunov => "lyapunov",
            Cmd::Scgf => "scgf",
            Cmd::Rate => "rate",
            Cmd::Decompose => "decompose",
            Cmd::Sweep => "sweep",
            Cmd::Selftest => "selftest",
        }
    }
}

fn init_threads(cli: &Cli, cfg_threads: Option<usize>) {
    let n = cli
        .threads
        .or(cfg_threads)
        .or_else(|| std::env::var("DEVRATE_THREADS").ok().and_then(|v| v.parse().ok()));
    if let Some(n) = n {
        if n > 0 {
            // a second initialization in-process is fine to ignore
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if matches!(cli.cmd, Cmd::Selftest) {
        init_threads(cli, None);
        let checks = selftest::run();
        let mut failures = 0;
        for c in &checks {
            let tag = if c.passed { "[PASS]" } else { "[FAIL]" };
            println!("{tag} {}: {}", c.name, c.detail);
            if !c.passed {
                failures += 1;
            }
        }
        if failures > 0 {
            return Err(CliError::Task(format!("selftest: {failures} check(s) failed")));
        }
        println!("selftest: all {} checks passed", checks.len());
        return Ok(());
    }

    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("missing --config <path>".into()))?;
    let cfg = config::load_config(path)?;
    let run_cfg = cfg.run.clone().unwrap_or(config::RunConfig {
        seed: None,
        out: None,
        threads: None,
    });
    init_threads(cli, run_cfg.threads);
    let seed = cli.seed.or(run_cfg.seed).unwrap_or(0);
    let out_dir = cli
        .out
        .clone()
        .or_else(|| run_cfg.out.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("devrate-out"));

    let artifacts = match cli.cmd {
        Cmd::Lyapunov => tasks::run_lyapunov(&cfg, seed)?,
        Cmd::Scgf => tasks::run_scgf(&cfg, seed)?,
        Cmd::Rate => tasks::run_rate(&cfg, seed)?,
        Cmd::Decompose => tasks::run_decompose(&cfg, seed)?,
        Cmd::Sweep => tasks::run_sweep(&cfg, seed)?,
        Cmd::Selftest => unreachable!(),
    };
    let written = output::write_artifacts(&out_dir, cli.cmd.name(), seed, &artifacts)?;
    for name in &written {
        println!("wrote {}", out_dir.join(name).display());
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

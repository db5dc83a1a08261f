//! `toroid`: run invariant, entropy and covering experiments on a pattern map
//! described in a TOML or JSON file.
//!
//! Exit status is 0 when every check passes, 1 when some check fails and 2
//! on configuration or precondition errors.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use log::info;

use crate::commands::RunReport;
use crate::config::{ExperimentConfig, RunOptions};
use crate::output::{to_json, OutDir};

#[derive(Parser)]
#[command(name = "toroid", version, about = "Solid-torus self-embedding experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Map description (TOML, or JSON), optionally with a `[run]` table.
    #[arg(long, global = true)]
    map_file: Option<PathBuf>,
    /// Directory receiving reports and tables.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Curve in CSV form, for `index` and `egr`.
    #[arg(long, global = true)]
    curve_file: Option<PathBuf>,
    #[command(flatten)]
    run: RunOptions,
}

#[derive(Clone, Copy, Subcommand)]
enum Command {
    /// Index sequence, crossing tables and prime divisors.
    Index,
    /// Geometric and homological degrees.
    Degree,
    /// Bowen counts, length growth and the inequality chain, with tables.
    Entropy,
    /// Growth rate of iterated curve lengths.
    Egr,
    /// Interval cover of a dynamical ball's preimage and its bounds.
    Yomdin,
    /// The inequality chain alone.
    Chain,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Index => "index",
            Command::Degree => "degree",
            Command::Entropy => "entropy",
            Command::Egr => "egr",
            Command::Yomdin => "yomdin",
            Command::Chain => "chain",
        }
    }
}

fn run(cli: &Cli) -> Result<RunReport> {
    let path = cli.map_file.as_ref().context("--map-file is required")?;
    let cfg = ExperimentConfig::load(path, &cli.run)?;
    let mut out = OutDir::create(&cli.out_dir)?;
    let curve = cli.curve_file.as_deref();
    let start = Instant::now();
    let mut report = match cli.command {
        Command::Index => commands::cmd_index(&cfg, &mut out, curve)?,
        Command::Degree => commands::cmd_degree(&cfg, &mut out)?,
        Command::Entropy => commands::cmd_entropy(&cfg, &mut out)?,
        Command::Egr => commands::cmd_egr(&cfg, &mut out, curve)?,
        Command::Yomdin => commands::cmd_yomdin(&cfg, &mut out)?,
        Command::Chain => commands::cmd_chain(&cfg, &mut out)?,
    };
    let wall = start.elapsed().as_secs_f64();
    let name = cli.command.name();
    report.files = out.written().to_vec();
    report.files.push(format!("{name}_report.json"));
    report.files.sort();
    out.write(&format!("{name}_report.json"), &to_json(&report)?)?;
    out.write(&format!("{name}_timing.json"), &to_json(&serde_json::json!({ "wall_seconds": wall }))?)?;
    info!("{name} finished in {wall:.3} s");
    Ok(report)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(report) => {
            for c in &report.checks {
                println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            println!(
                "{} {} on {} (seed {}): {}",
                report.command,
                env!("CARGO_PKG_NAME"),
                report.map_id,
                report.seed,
                if report.all_pass { "all checks passed" } else { "some checks failed" }
            );
            if report.all_pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

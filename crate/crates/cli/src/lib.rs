//! Experiment runner behind the `stokeslet` binary.

pub mod config;
pub mod error;
pub mod experiments;
pub mod report;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::ScenarioConfig;
use crate::error::CliResult;
use crate::report::{Output, Report};

#[derive(Debug, Parser)]
#[command(
    name = "stokeslet",
    version,
    about = "Particle experiments for transport–Stokes sedimentation"
)]
pub struct Cli {
    /// Scenario file; repeat to run several scenarios in turn.
    #[arg(long = "config", global = true)]
    pub configs: Vec<PathBuf>,
    /// Output directory (overrides `output_dir` in the config).
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for velocity sums; 0 uses every core.
    #[arg(long, global = true, default_value_t = 1)]
    pub parallel: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Integrate the particle system and record a trajectory.
    Simulate,
    /// Compare two nearby initial data through the Q functional.
    Stability,
    /// Axisymmetry, on-axis settling and cylinder confinement.
    Symmetry,
    /// Identities and translation estimates of the Oseen kernel.
    KernelVerify,
    /// Osgood moduli, their Ω functions and Bihari bounds.
    OsgoodVerify,
    /// L^p and L^Θ norms of the explicit unbounded density.
    ExampleNorms,
    /// W1 gaps between runs from progressively mollified data.
    MollifyConverge,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Stability => "stability",
            Command::Symmetry => "symmetry",
            Command::KernelVerify => "kernel-verify",
            Command::OsgoodVerify => "osgood-verify",
            Command::ExampleNorms => "example-norms",
            Command::MollifyConverge => "mollify-converge",
        }
    }
}

/// Process exit status: every check passed.
pub const EXIT_PASS: i32 = 0;
/// At least one check failed.
pub const EXIT_FAIL: i32 = 1;
/// The configuration was rejected or the run errored.
pub const EXIT_ERROR: i32 = 2;

pub fn run_experiment(command: Command, cfg: &ScenarioConfig, out: &Output) -> CliResult<Report> {
    match command {
        Command::Simulate => experiments::simulate(cfg, out),
        Command::Stability => experiments::stability(cfg, out),
        Command::Symmetry => experiments::symmetry(cfg, out),
        Command::KernelVerify => experiments::kernel_verify(cfg, out),
        Command::OsgoodVerify => experiments::osgood_verify(cfg, out),
        Command::ExampleNorms => experiments::example_norms(cfg, out),
        Command::MollifyConverge => experiments::mollify_converge(cfg, out),
    }
}

/// Loads, validates and runs one scenario, writing config.json and report.json into `dir`.
pub fn run_scenario(command: Command, cfg: &ScenarioConfig, dir: &Path) -> CliResult<Report> {
    cfg.validate()?;
    let out = Output::new(dir, cfg)?;
    out.write_config(cfg)?;
    let report = run_experiment(command, cfg, &out)?;
    out.write_report(&report)?;
    Ok(report)
}

fn load(cli: &Cli, path: Option<&Path>) -> CliResult<ScenarioConfig> {
    let mut cfg = match path {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn output_dir(cli: &Cli, cfg: &ScenarioConfig, path: Option<&Path>) -> PathBuf {
    let base = cli
        .output
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| Path::new("output").join(cli.command.name()));
    match path {
        Some(p) if cli.configs.len() > 1 => base.join(
            p.file_stem()
                .map_or_else(|| "scenario".into(), |s| s.to_string_lossy().into_owned()),
        ),
        _ => base,
    }
}

/// Runs every requested scenario and returns the process exit status.
pub fn main_with(cli: &Cli) -> i32 {
    // A global pool can only be installed once per process.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.parallel)
        .build_global();
    let paths: Vec<Option<&Path>> = if cli.configs.is_empty() {
        vec![None]
    } else {
        cli.configs.iter().map(|p| Some(p.as_path())).collect()
    };
    let mut status = EXIT_PASS;
    for path in paths {
        let label = path.map_or_else(|| "defaults".to_string(), |p| p.display().to_string());
        let result = load(cli, path).and_then(|cfg| {
            let dir = output_dir(cli, &cfg, path);
            run_scenario(cli.command, &cfg, &dir).map(|r| (r, dir))
        });
        match result {
            Ok((report, dir)) => {
                for c in &report.checks {
                    println!(
                        "[{}] {}: {}",
                        if c.passed { "ok" } else { "failed" },
                        c.name,
                        c.detail
                    );
                }
                let verdict = if report.passed() { "PASS" } else { "FAIL" };
                println!(
                    "{} {label}: {verdict} ({})",
                    report.experiment,
                    dir.display()
                );
                if !report.passed() {
                    status = status.max(EXIT_FAIL);
                }
            }
            Err(e) => {
                eprintln!("error: {label}: {e}");
                status = EXIT_ERROR;
            }
        }
    }
    status
}

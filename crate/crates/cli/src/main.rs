use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};
use magtv_cli::config::RunConfig;
use magtv_cli::{run, scenario};

/// Total-variation inversion of magnetic field data over vector measures.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; the built-in standard scenario when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replaces every seed in the config (noise, random truth, level noise).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding `output.dir`.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Writes the scenario truth, sensor and field files with a manifest.
    Generate {
        #[command(flatten)]
        common: Common,
    },
    /// Runs the refinement plan for every λ ratio.
    Invert {
        #[command(flatten)]
        common: Common,
        /// λ as a fraction of λ_max; repeatable, overrides `lambda.ratios`.
        #[arg(long = "lambda-ratio")]
        lambda_ratio: Vec<f64>,
    },
    /// Solves on the finest grid along a path of λ ratios.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// λ as a fraction of λ_max; repeatable, overrides `lambda.ratios`.
        #[arg(long = "lambda-ratio")]
        lambda_ratio: Vec<f64>,
    },
    /// Checks the optimality certificate of a measure on the finest grid.
    Certify {
        #[command(flatten)]
        common: Common,
        /// Measure CSV (`x,y,z,mx,my,mz`) supported on finest grid nodes.
        #[arg(long)]
        measure: PathBuf,
        /// λ as a fraction of λ_max.
        #[arg(long = "lambda-ratio")]
        lambda_ratio: f64,
        /// Relative certificate tolerance.
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
    /// Runs one refinement and prints the trace table.
    Refine {
        #[command(flatten)]
        common: Common,
        /// λ as a fraction of λ_max; the first config ratio when omitted.
        #[arg(long = "lambda-ratio")]
        lambda_ratio: Option<f64>,
    },
}

fn load(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::standard("out"),
    };
    if let Some(seed) = common.seed {
        cfg.override_seed(seed);
    }
    if let Some(dir) = &common.output {
        cfg.output.dir = dir.clone();
    }
    Ok(cfg)
}

fn with_ratios(mut cfg: RunConfig, ratios: Vec<f64>) -> RunConfig {
    if !ratios.is_empty() {
        cfg.lambda.ratios = ratios;
    }
    cfg
}

fn report_warnings(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { common } => {
            let cfg = load(&common)?;
            cfg.validate()?;
            let Some(sc) = &cfg.scenario else { bail!("generate needs a [scenario] table") };
            let files = scenario::generate_scenario(sc, &cfg.output.dir)?;
            println!("{}", files.manifest.display());
        }
        Command::Invert { common, lambda_ratio } => {
            let cfg = with_ratios(load(&common)?, lambda_ratio);
            let summary = run::run_inversion(&cfg)?;
            report_warnings(&summary.warnings);
            println!("{}", cfg.output.dir.join("summary.json").display());
        }
        Command::Sweep { common, lambda_ratio } => {
            let cfg = with_ratios(load(&common)?, lambda_ratio);
            let summary = run::lambda_sweep(&cfg)?;
            report_warnings(&summary.warnings);
            println!("{}", std::fs::read_to_string(cfg.output.dir.join("sweep.csv"))?.trim_end());
        }
        Command::Certify { common, measure, lambda_ratio, tol } => {
            let cfg = load(&common)?;
            let report = run::certify(&cfg, &measure, lambda_ratio, tol)?;
            println!(
                "{} bound_gap={:e} alignment_gap={:e} pairing_residual={:e}",
                if report.pass { "PASS" } else { "FAIL" },
                report.bound_gap,
                report.alignment_gap,
                report.pairing_residual
            );
            if !report.pass {
                report_warnings(&["certificate does not hold at the given tolerance".into()]);
            }
        }
        Command::Refine { common, lambda_ratio } => {
            let cfg = load(&common)?;
            let ratio = lambda_ratio.unwrap_or(cfg.lambda.ratios[0]);
            let (summary, trace) = run::refine(&cfg, ratio)?;
            report_warnings(&summary.warnings);
            print!("{trace}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

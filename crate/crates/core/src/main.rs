use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use serde_json::json;

use moller_lab::config::{ExperimentConfig, Overrides};
use moller_lab::experiment::{run_experiment, Command};

/// Numerical Moller maps between symmetric hyperbolic systems on 1+1
/// dimensional spacetimes.
#[derive(Debug, Parser)]
#[command(name = "moller-lab", version)]
struct Cli {
    /// Pipeline to run.
    #[arg(value_enum)]
    command: Command,
    /// TOML experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides output.dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Use rho = 1 instead of the volume-matching weight.
    #[arg(long)]
    no_rho: bool,
    /// Fourth-order finite differences in x instead of the spectral derivative.
    #[arg(long)]
    fd4: bool,
    /// CFL number; the step count is derived from it.
    #[arg(long)]
    cfl: Option<f64>,
}

const EXIT_FAIL: u8 = 1;
const EXIT_CONFIG: u8 = 2;

fn fail(kind: &str, message: String) -> ExitCode {
    eprintln!("{}", json!({ "error": kind, "message": message }));
    ExitCode::from(EXIT_CONFIG)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match ExperimentConfig::load(&cli.config) {
        Ok(c) => c,
        Err(e) => return fail("config", e.to_string()),
    };
    let ov = Overrides {
        no_rho: cli.no_rho,
        fd4: cli.fd4,
        cfl: cli.cfl,
    };
    let exp = match cfg.build(ov) {
        Ok(e) => e,
        Err(e) => return fail("config", e.to_string()),
    };
    let out = cli.out.unwrap_or_else(|| PathBuf::from(&exp.config.output.dir));
    match run_experiment(&exp, cli.command, &out) {
        Ok(o) => {
            println!(
                "{} {}: {}",
                cli.command.name(),
                if o.passed { "PASS" } else { "FAIL" },
                out.join(format!("{}.json", cli.command.name())).display()
            );
            if o.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_FAIL)
            }
        }
        Err(e) => fail(e.kind(), e.to_string()),
    }
}

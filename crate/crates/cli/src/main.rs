use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kdq::{emit, run_scenario, validate_scenario, CliError, OutputFormat, ScenarioConfig, ScenarioKind};

#[derive(Parser)]
#[command(name = "kdq", version, about = "Run Kirkwood-Dirac quasiprobability scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario document and write its report
    Run {
        /// Scenario document (JSON)
        config: PathBuf,
        /// Output directory
        #[arg(short, long, default_value = ".")]
        out: PathBuf,
        /// Override the document's seed
        #[arg(long)]
        seed: Option<u64>,
        #[arg(short, long, value_enum, default_value_t = OutputFormat::Structured)]
        format: OutputFormat,
    },
    /// Check a scenario document without running it
    Validate { config: PathBuf },
    /// List the scenario kinds
    ListScenarios,
}

const EXIT_FAIL: u8 = 1;
const EXIT_CONFIG: u8 = 2;

fn config_error(e: &CliError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(EXIT_CONFIG)
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run {
            config,
            out,
            seed,
            format,
        } => {
            let mut cfg = match ScenarioConfig::load(&config) {
                Ok(c) => c,
                Err(e) => return config_error(&e),
            };
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let report = match run_scenario(cfg) {
                Ok(r) => r,
                Err(e) => return config_error(&e),
            };
            let written = match emit(&report, format, &out) {
                Ok(w) => w,
                Err(e) => return config_error(&e),
            };
            for c in report.failed_checks() {
                println!("FAIL {}: lhs {:e}, rhs {:e}, tolerance {:e}", c.name, c.lhs, c.rhs, c.tolerance);
            }
            if let Some(e) = &report.error {
                println!("ERROR {} at {}: {}", e.scenario, e.context, e.message);
            }
            let failed = report.failed_checks().count();
            println!(
                "{}: {} checks, {} failed{}",
                report.scenario.name,
                report.checks.len(),
                failed,
                if report.error.is_some() { ", aborted" } else { "" }
            );
            for path in written {
                println!("wrote {}", path.display());
            }
            if report.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_FAIL)
            }
        }
        Command::Validate { config } => {
            match ScenarioConfig::load(&config).and_then(validate_scenario) {
                Ok((c, _)) => {
                    println!("{}: valid {} scenario", c.name, c.kind.name());
                    ExitCode::SUCCESS
                }
                Err(e) => config_error(&e),
            }
        }
        Command::ListScenarios => {
            for kind in ScenarioKind::ALL {
                println!("{:<18} {}", kind.name(), kind.summary());
            }
            ExitCode::SUCCESS
        }
    }
}

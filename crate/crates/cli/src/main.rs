use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use sparkspread_core::config::RunConfig;
use sparkspread_core::io::{encode_paths_binary, write_paths_csv};
use sparkspread_core::run::{price, simulate};
use sparkspread_core::validation::{run_suite, Suite, ValidateOptions};
use sparkspread_core::Error;

const EXIT_FAILED: u8 = 1;
const EXIT_INVALID: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;

/// Spark spread valuation of gas-fired power plants.
#[derive(Debug, Parser)]
#[command(name = "sparkspread", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Price the contract with the configured method and write result JSON.
    Price {
        #[command(flatten)]
        common: Common,
        /// Also write the convergence or Monte Carlo diagnostics.
        #[arg(long)]
        report: bool,
    },
    /// Simulate spot paths on the contract grid and export them.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Write the binary path format instead of CSV.
        #[arg(long)]
        binary: bool,
    },
    /// Run an oracle suite: bounds, oracle, convergence or all.
    Validate {
        suite: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Number of randomized bound-containment cases.
        #[arg(long)]
        cases: Option<usize>,
        /// Paths per bound-containment case.
        #[arg(long)]
        paths: Option<usize>,
        /// Draws per Monte Carlo oracle check.
        #[arg(long)]
        oracle_paths: Option<usize>,
    },
}

#[derive(Debug, Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

enum Failure {
    Core(Error),
    Checks(String),
    Other(anyhow::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(EXIT_INVALID);
    }
    match dispatch(cli.command) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::NotConverged(_) => EXIT_NOT_CONVERGED,
                e if e.is_validation() => EXIT_INVALID,
                _ => EXIT_FAILED,
            })
        }
        Err(Failure::Checks(summary)) => {
            println!("{summary}");
            ExitCode::from(EXIT_FAILED)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_FAILED)
        }
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("SPARKSPREAD_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("SPARKSPREAD_THREADS must be a positive integer, got {raw:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn dispatch(command: Command) -> Result<String, Failure> {
    match command {
        Command::Price { common, report } => cmd_price(&common, report),
        Command::Simulate { common, binary } => cmd_simulate(&common, binary),
        Command::Validate {
            suite,
            seed,
            out,
            cases,
            paths,
            oracle_paths,
        } => {
            let defaults = ValidateOptions::default();
            let options = ValidateOptions {
                seed: seed.unwrap_or(defaults.seed),
                bounds_cases: cases.unwrap_or(defaults.bounds_cases),
                bounds_paths: paths.unwrap_or(defaults.bounds_paths),
                oracle_paths: oracle_paths.unwrap_or(defaults.oracle_paths),
            };
            cmd_validate(&suite, &options, &out)
        }
    }
}

fn load_config(common: &Common) -> Result<RunConfig, Failure> {
    let text = fs::read_to_string(&common.config)
        .with_context(|| format!("reading {}", common.config.display()))?;
    let mut config = RunConfig::from_json(&text)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn ensure_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(())
}

fn cmd_price(common: &Common, report: bool) -> Result<String, Failure> {
    let config = load_config(common)?;
    ensure_dir(&common.out)?;
    let report_path = common.out.join(&config.output.report);
    let result = match price(&config) {
        Ok(r) => r,
        Err(Error::NotConverged(outcome)) => {
            if report {
                let json = serde_json::to_string_pretty(&outcome.report).expect("report serializes") + "\n";
                write(&report_path, json.as_bytes())?;
            }
            return Err(Error::NotConverged(outcome).into());
        }
        Err(e) => return Err(e.into()),
    };
    write(&common.out.join(&config.output.result), result.to_json().as_bytes())?;
    if report {
        let json = if let Some(r) = &result.convergence {
            serde_json::to_string_pretty(r)
        } else if let Some(mc) = &result.mc {
            serde_json::to_string_pretty(mc)
        } else if let Some(m) = &result.merton_series {
            serde_json::to_string_pretty(m)
        } else {
            serde_json::to_string_pretty(&result.bounds)
        }
        .expect("report serializes");
        write(&report_path, (json + "\n").as_bytes())?;
    }
    Ok(result.summary())
}

fn cmd_simulate(common: &Common, binary: bool) -> Result<String, Failure> {
    let config = load_config(common)?;
    ensure_dir(&common.out)?;
    let (e, g) = simulate(&config)?;
    let ext = if binary { "bin" } else { "csv" };
    for (paths, leg) in [(&e, "electricity"), (&g, "gas")] {
        let path = common.out.join(format!("{}_{leg}.{ext}", config.output.paths));
        if binary {
            write(&path, &encode_paths_binary(paths))?;
        } else {
            let mut buf = Vec::new();
            write_paths_csv(paths, &mut buf)?;
            write(&path, &buf)?;
        }
    }
    Ok(format!(
        "{}: {} paths x {} points, seed {}",
        config.model.tag(),
        e.n_paths(),
        e.grid().n_points(),
        config.seed
    ))
}

fn cmd_validate(suite: &str, options: &ValidateOptions, out: &Path) -> Result<String, Failure> {
    let suite: Suite = suite.parse()?;
    let report = run_suite(suite, options)?;
    ensure_dir(out)?;
    write(&out.join(format!("validation_{suite}.json")), report.to_json().as_bytes())?;
    write(&out.join(format!("validation_{suite}.csv")), report.to_csv()?.as_bytes())?;
    let mut summary = format!("validate {suite}: {}/{} checks passed", report.n_pass, report.checks.len());
    for c in report.failures() {
        summary.push_str(&format!("\n  FAIL {} {}: {} not in [{}, {}]", c.suite, c.name, c.value, c.lower, c.upper));
    }
    if report.all_pass {
        Ok(summary)
    } else {
        Err(Failure::Checks(summary))
    }
}

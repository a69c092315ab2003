//! Command-line entry point.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::Parser;

use crate::config::{load, Overrides};
use crate::error::OsmosisError;
use crate::harness::{run_experiment, SuiteKind};
use crate::output::{extract_manifest, render, Format, RunManifest};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

/// Runs osmosis placement experiments and writes one record per run.
#[derive(Debug, Parser)]
#[command(name = "osmosis-sim", version)]
pub struct Args {
    /// TOML config file; built-in defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// distribution, probability_vs_epsilon or allocation_time_vs_epsilon.
    #[arg(long, value_parser = clap::builder::ValueParser::new(parse_suite))]
    pub suite: Option<SuiteKind>,

    #[arg(long)]
    pub seed: Option<u64>,

    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// csv or json.
    #[arg(long, value_parser = clap::builder::ValueParser::new(parse_format))]
    pub format: Option<Format>,

    #[arg(long)]
    pub runs: Option<u32>,

    /// Step the service count evenly across runs instead of drawing it.
    #[arg(long)]
    pub sweep_services: bool,

    /// Re-run from the manifest embedded in an earlier output file.
    #[arg(long, conflicts_with_all = ["config", "suite", "seed", "format", "runs", "sweep_services"])]
    pub replay: Option<PathBuf>,
}

fn parse_suite(s: &str) -> Result<SuiteKind, String> {
    s.parse()
}

fn parse_format(s: &str) -> Result<Format, String> {
    s.parse()
}

enum Failure {
    Config(String),
    Runtime(String),
}

fn manifest_for(args: &Args) -> Result<RunManifest, Failure> {
    let out = args.out.as_ref().map(|p| p.display().to_string());
    if let Some(path) = &args.replay {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
        let manifest = extract_manifest(&text).map_err(|e| Failure::Config(e.to_string()))?;
        manifest.config.validate().map_err(|e| Failure::Config(e.to_string()))?;
        return Ok(manifest);
    }
    let overrides = Overrides {
        suite: args.suite,
        seed: args.seed,
        runs: args.runs,
        sweep_services: args.sweep_services,
    };
    let cfg = load(args.config.as_deref(), &overrides).map_err(|e| Failure::Config(e.to_string()))?;
    Ok(RunManifest::new(
        cfg,
        args.config.as_ref().map(|p| p.display().to_string()),
        out,
        args.format.unwrap_or(Format::Csv),
    ))
}

fn execute(args: &Args) -> Result<(), Failure> {
    let manifest = manifest_for(args)?;
    let records = run_experiment(&manifest.config);
    let text = render(&manifest, &records).map_err(|e: OsmosisError| Failure::Runtime(e.to_string()))?;
    match &args.out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))?,
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Failure::Runtime(e.to_string()))?,
    }
    let failed: Vec<_> = records
        .iter()
        .filter_map(|r| r.error.as_ref().map(|e| format!("run {} (epsilon {}): {e}", r.run_id, r.epsilon_initial)))
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Runtime(failed.join("\n")))
    }
}

/// Parses `argv`, runs the suite and returns the process exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&args) {
        Ok(()) => EXIT_OK,
        Err(Failure::Config(msg)) => {
            eprintln!("osmosis-sim: configuration error: {msg}");
            EXIT_CONFIG
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("osmosis-sim: runtime error: {msg}");
            EXIT_RUNTIME
        }
    }
}

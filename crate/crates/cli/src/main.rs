//! Config-driven diagnostics runner: `run` executes the analyses named in
//! a JSON experiment file and writes a deterministic report; `table`
//! flattens one analysis of a report for external plotting.
//!
//! Exit codes: 0 success, 1 at least one analysis failed its tolerance,
//! 2 configuration or schema error.

mod config;
mod runner;
mod table;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use config::ExperimentConfig;

#[derive(Parser, Debug)]
#[command(name = "endosol", about = "Exact diagnostics for finite-to-one endomorphisms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the analyses in a JSON experiment config and write a report.
    Run {
        config: PathBuf,
        /// Directory for the report (defaults to the config's directory).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed for sampled analyses; part of the report identity.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Run analyses on worker threads (results keep declaration order).
        #[arg(long, default_value_t = false)]
        parallel: bool,
    },
    /// Print one analysis of a report as a flat table.
    Table {
        report: PathBuf,
        #[arg(long)]
        analysis: String,
        #[arg(long, value_enum, default_value_t = TableFormat::Csv)]
        format: TableFormat,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TableFormat {
    Csv,
    Json,
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { config, out, seed, parallel } => run_command(&config, out, seed, parallel),
        Command::Table { report, analysis, format } => table_command(&report, &analysis, format),
    }
}

fn run_command(config_path: &Path, out: Option<PathBuf>, seed: u64, parallel: bool) -> ExitCode {
    let raw = match std::fs::read_to_string(config_path) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("cannot read {}: {e}", config_path.display());
            return ExitCode::from(2);
        }
    };
    let cfg: ExperimentConfig = match serde_json::from_str(&raw) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config schema error: {e}");
            return ExitCode::from(2);
        }
    };
    let started = Instant::now();
    let result = if parallel { runner::run_parallel(&cfg, seed) } else { runner::run(&cfg, seed) };
    let report = match result {
        Ok(r) => r,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    let elapsed = started.elapsed();

    let out_dir = out.unwrap_or_else(|| {
        config_path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."))
    });
    let file_name = cfg.output.clone().unwrap_or_else(|| "report.json".into());
    let out_path = out_dir.join(file_name);
    if let Some(parent) = out_path.parent() {
        if let Err(e) = std::fs::create_dir_all(parent) {
            eprintln!("cannot create {}: {e}", parent.display());
            return ExitCode::from(2);
        }
    }
    if let Err(e) = std::fs::write(&out_path, runner::to_json(&report)) {
        eprintln!("cannot write {}: {e}", out_path.display());
        return ExitCode::from(2);
    }

    // timing goes to standard output only so the report stays byte-stable
    print!("{}", runner::summary_lines(&report));
    println!("report             {}", out_path.display());
    println!("wall-clock         {:.3}s", elapsed.as_secs_f64());
    if report.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn table_command(report_path: &Path, analysis: &str, format: TableFormat) -> ExitCode {
    let raw = match std::fs::read_to_string(report_path) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("cannot read {}: {e}", report_path.display());
            return ExitCode::from(2);
        }
    };
    let report: serde_json::Value = match serde_json::from_str(&raw) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("report parse error: {e}");
            return ExitCode::from(2);
        }
    };
    let fmt = match format {
        TableFormat::Csv => table::Format::Csv,
        TableFormat::Json => table::Format::Json,
    };
    match table::emit_table(&report, analysis, fmt) {
        Ok(s) => {
            print!("{s}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
    }
}

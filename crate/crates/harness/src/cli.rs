//! `dem-harness` command line.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use crate::config::{ExperimentConfig, EXPERIMENT_KINDS, SCHEMA_VERSION};
use crate::error::HarnessError;
use crate::experiments;

#[derive(Debug, Parser)]
#[command(name = "dem-harness", about = "Run DEM observer experiments from JSON configs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the experiment described by a config.
    Run {
        config: PathBuf,
        /// Write artifacts here instead of the config's output_dir.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Check a config without running it.
    Validate { config: PathBuf },
    /// List the experiment kinds.
    ListExperiments,
    /// Print the harness and schema versions.
    Version,
}

/// Runs the CLI and returns the process exit code: 0 on success, 1 for
/// usage and config errors, 2 for failures while running.
pub fn main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    main_with(args, &mut std::io::stdout(), &mut std::io::stderr())
}

pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let text = e.render().to_string();
            let _ = if code == 0 {
                write!(out, "{text}")
            } else {
                write!(err, "{text}")
            };
            return code;
        }
    };
    match cli.command {
        Command::Run { config, output } => run(&config, output, out, err),
        Command::Validate { config } => match ExperimentConfig::load_validated(&config) {
            Ok(cfg) => {
                let _ = writeln!(
                    out,
                    "{}: valid {} config (hash {})",
                    config.display(),
                    cfg.kind(),
                    cfg.hash()
                );
                0
            }
            Err(e) => report_error(&e, err),
        },
        Command::ListExperiments => {
            for (kind, about) in EXPERIMENT_KINDS {
                let _ = writeln!(out, "{kind:<24} {about}");
            }
            0
        }
        Command::Version => {
            let _ = writeln!(
                out,
                "dem-harness {} (config schema {SCHEMA_VERSION})",
                env!("CARGO_PKG_VERSION")
            );
            0
        }
    }
}

fn report_error(e: &HarnessError, err: &mut dyn Write) -> i32 {
    match e {
        HarnessError::Invalid(fields) => {
            let _ = writeln!(err, "invalid config:");
            for f in fields {
                let _ = writeln!(err, "  {f}");
            }
        }
        other => {
            let _ = writeln!(err, "error: {other}");
        }
    }
    e.exit_code()
}

fn run(config: &std::path::Path, output: Option<PathBuf>, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let cfg = match ExperimentConfig::load_validated(config) {
        Ok(c) => c,
        Err(e) => return report_error(&e, err),
    };
    let report = match experiments::run(&cfg, output.as_deref()) {
        Ok(r) => r,
        Err(e) => return report_error(&e, err),
    };
    let root = output.unwrap_or(cfg.output_dir.clone());
    let _ = writeln!(
        out,
        "{} [{}] hash {}",
        report.experiment, report.name, report.config_hash
    );
    for c in &report.checks {
        let _ = writeln!(
            out,
            "  {} {}: {}",
            if c.passed { "ok  " } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    let _ = writeln!(
        out,
        "  {} files, manifest at {}",
        report.files.len(),
        root.join("manifest.json").display()
    );
    if report.failures.is_empty() {
        0
    } else {
        for f in &report.failures {
            let _ = writeln!(err, "seed {} {} {}: {}", f.seed, f.estimator, f.setting, f.error);
        }
        let total = report.runtimes.len();
        report_error(
            &HarnessError::RunsFailed {
                failed: report.failures.len(),
                total,
            },
            err,
        )
    }
}

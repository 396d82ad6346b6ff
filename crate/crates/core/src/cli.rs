//! Command-line front end.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use crate::config::load_config;
use crate::sweep::{run_sweep, write_plot_data, SweepOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "vanetsim", about = "Vehicular message dissemination simulator", disable_version_flag = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the configured density sweep and emit metrics CSV.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// CSV destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Directory for per-(protocol, metric) plot files.
        #[arg(long)]
        plot_data: Option<PathBuf>,
        /// Write one line per processed event.
        #[arg(long)]
        event_log: Option<PathBuf>,
        /// Run the sweep on one thread.
        #[arg(long)]
        serial: bool,
    },
    /// Check a config and print it with defaults filled in.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the version.
    Version,
}

/// Runs the CLI with explicit streams and returns the process exit code.
pub fn cli_main<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_CONFIG,
            };
            let text = e.render().to_string();
            if code == EXIT_OK {
                let _ = write!(stdout, "{text}");
            } else {
                let _ = write!(stderr, "{text}");
            }
            return code;
        }
    };
    match cli.command {
        Command::Version => {
            let _ = writeln!(stdout, "vanetsim {}", env!("CARGO_PKG_VERSION"));
            EXIT_OK
        }
        Command::Validate { config } => match load_config(&config) {
            Ok(cfg) => {
                let _ = writeln!(stdout, "{}", cfg.to_json());
                EXIT_OK
            }
            Err(e) => {
                let _ = writeln!(stderr, "error: {e}");
                EXIT_CONFIG
            }
        },
        Command::Run {
            config,
            out,
            plot_data,
            event_log,
            serial,
        } => {
            let cfg = match load_config(&config) {
                Ok(cfg) => cfg,
                Err(e) => {
                    let _ = writeln!(stderr, "error: {e}");
                    return EXIT_CONFIG;
                }
            };
            let opts = SweepOptions {
                parallel: !serial,
                event_log: event_log.is_some(),
            };
            let result = match run_sweep(&cfg, opts) {
                Ok(r) => r,
                Err(e) => {
                    let _ = writeln!(stderr, "error: {e}");
                    return EXIT_RUNTIME;
                }
            };
            let csv = result.csv();
            let written = match &out {
                Some(path) => fs::write(path, &csv).map_err(|e| format!("{}: {e}", path.display())),
                None => stdout.write_all(csv.as_bytes()).map_err(|e| e.to_string()),
            };
            if let Err(e) = written {
                let _ = writeln!(stderr, "error: cannot write CSV: {e}");
                return EXIT_RUNTIME;
            }
            if let (Some(path), Some(log)) = (&event_log, &result.event_log) {
                if let Err(e) = fs::write(path, log) {
                    let _ = writeln!(stderr, "error: cannot write event log {}: {e}", path.display());
                    return EXIT_RUNTIME;
                }
            }
            if let Some(dir) = &plot_data {
                if let Err(e) = write_plot_data(dir, &result.summaries) {
                    let _ = writeln!(stderr, "error: cannot write plot data to {}: {e}", dir.display());
                    return EXIT_RUNTIME;
                }
            }
            EXIT_OK
        }
    }
}

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use consensus_svm::cli_harness::{self as harness, Command};
use consensus_svm::Error;

/// Distributed linear SVM experiments on a simulated master/slave cluster.
#[derive(Parser)]
#[command(name = "consensus-svm", version)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Final accuracy of each method across partition counts.
    Sweep(Options),
    /// Per-iteration ADMM residual, objective and accuracy.
    Trace(Options),
    /// Per-iteration wall-clock time of ADMM methods.
    Timing(Options),
    /// Distance between models trained on samples differing in one point.
    Stability(Options),
    /// Mean distance to a large-sample reference model.
    Bias(Options),
    /// Toy points and separating lines for external plotting.
    Toyfig(Options),
}

#[derive(Args)]
struct Options {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `--key value` overrides, applied after the file.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
    overrides: Vec<String>,
}

fn emit(text: &str, path: Option<&PathBuf>) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            // Configuration mistakes are usage errors, like clap's own.
            match e.downcast_ref::<Error>() {
                Some(Error::Config { .. }) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let (command, opts) = match cli.command {
        Sub::Sweep(o) => (Command::Sweep, o),
        Sub::Trace(o) => (Command::Trace, o),
        Sub::Timing(o) => (Command::Timing, o),
        Sub::Stability(o) => (Command::Stability, o),
        Sub::Bias(o) => (Command::Bias, o),
        Sub::Toyfig(o) => (Command::Toyfig, o),
    };
    let path = opts.config.or_else(|| harness::config_path(&opts.overrides));
    let text = path
        .as_ref()
        .map(|p| std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display())))
        .transpose()?;
    let config = harness::parse_config(command, text.as_deref(), &opts.overrides)?;
    let out = config.output.as_ref();

    match command {
        Command::Sweep => {
            let report = harness::run_accuracy_sweep(&config)?;
            emit(&report.to_csv(config.wall_clock)?, out)?;
        }
        Command::Trace => {
            let report = harness::run_convergence_trace(&config)?;
            emit(&report.to_csv(config.wall_clock)?, out)?;
        }
        Command::Timing => {
            let (report, summary) = harness::run_timing(&config)?;
            emit(&report.to_csv(true)?, out)?;
            for s in summary {
                eprintln!(
                    "{} {} M={} seed={}: {} iterations, {} ms/iteration",
                    s.experiment,
                    s.method,
                    s.m,
                    s.seed,
                    s.iterations,
                    harness::format_real(s.mean_ms)
                );
            }
        }
        Command::Stability => {
            let (table, slope) = harness::run_stability(&config)?;
            emit(&table.to_csv()?, out)?;
            eprintln!("log-log slope: {}", harness::format_real(slope));
        }
        Command::Bias => {
            let table = harness::run_bias(&config)?;
            emit(&table.to_csv()?, out)?;
        }
        Command::Toyfig => {
            let (points, planes) = harness::run_toyfig(&config)?;
            emit(&points.to_csv()?, out)?;
            let data = harness::load_data(&config, config.seeds[0])?;
            let planes_text = harness::hyperplane_file(&data.train, &planes);
            let planes_path = config.planes_output.clone().or_else(|| {
                out.map(|p| {
                    let mut s = p.clone().into_os_string();
                    s.push(".planes");
                    PathBuf::from(s)
                })
            });
            match planes_path {
                Some(p) => std::fs::write(&p, planes_text)
                    .with_context(|| format!("writing {}", p.display()))?,
                None => eprint!("{planes_text}"),
            }
        }
    }
    Ok(())
}

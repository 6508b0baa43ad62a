use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use dd_crb::{run, CliError, Command, RunOptions, SweepSpec};

/// Delay-Doppler CRB, RSMA SINR and Monte-Carlo validation runs.
#[derive(Parser, Debug)]
#[command(name = "dd-crb", version)]
struct Cli {
    /// What to compute.
    #[arg(value_enum)]
    command: Command,

    /// Scenario file (flat `section.key = value` text).
    #[arg(long)]
    scenario: PathBuf,

    /// Output directory for CSV tables and the manifest.
    #[arg(long)]
    out: PathBuf,

    /// Overrides `rsma.seed` and `mc.seed`.
    #[arg(long)]
    seed: Option<u64>,

    /// Key to sweep, used with --values.
    #[arg(long, requires = "values", conflicts_with = "sweep")]
    param: Option<String>,

    /// Comma-separated values for --param.
    #[arg(long, requires = "param")]
    values: Option<String>,

    /// Sweep as `key=start:stop:step` or `key=a,b,c`.
    #[arg(long)]
    sweep: Option<String>,

    /// Add CRB/tau^2 and CRB*T^2 columns to CRB tables.
    #[arg(long)]
    normalized: bool,
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("DD_CRB_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| CliError::invalid("DD_CRB_THREADS", format!("`{raw}` is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::invalid("DD_CRB_THREADS", e.to_string()))
}

fn try_main(cli: Cli) -> Result<u8, CliError> {
    configure_threads()?;
    let sweep = match (&cli.param, &cli.values, &cli.sweep) {
        (Some(key), Some(values), _) => Some(SweepSpec::from_list(key, values)?),
        (_, _, Some(expr)) => Some(SweepSpec::parse(expr)?),
        _ => None,
    };
    let summary = run(&RunOptions {
        command: cli.command,
        scenario: cli.scenario,
        out_dir: cli.out,
        seed: cli.seed,
        sweep,
        normalized: cli.normalized,
    })?;
    eprintln!(
        "dd-crb: wrote {} ({} rows, {} failed) and {}",
        summary.csv.display(),
        summary.rows,
        summary.failed_rows,
        summary.manifest.display()
    );
    Ok(summary.exit_code)
}

fn main() -> ExitCode {
    match try_main(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("dd-crb: error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}

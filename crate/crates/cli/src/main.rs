use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use nessedp_cli::{execute, parse_config_with, resolve_kind, CliError, ExperimentKind, Overrides};

/// Run one experiment from a TOML configuration.
#[derive(Debug, Parser)]
#[command(name = "nessedp", version)]
struct Args {
    kind: ExperimentKind,
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated eps list, e.g. `0.1,0.05`.
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tol: Option<f64>,
}

fn run(args: Args) -> Result<bool, CliError> {
    let overrides = Overrides {
        eps: args.eps,
        seed: args.seed,
        tol: args.tol,
        out: args.out,
    };
    let cfg = parse_config_with(&args.config, &overrides)?;
    let kind = resolve_kind(&cfg, Some(args.kind))?;
    let (report, summary) = execute(&cfg, kind)?;
    for c in &report.checks {
        let mark = if c.passed { "ok  " } else { "FAIL" };
        println!("{mark} {}: {:.3e} (bound {:.1e})", c.name, c.value, c.bound);
    }
    println!(
        "{} {}: {} -> {}",
        kind,
        summary.name,
        if summary.passed { "passed" } else { "failed" },
        cfg.out_dir.display()
    );
    Ok(summary.passed)
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("{}", e.report());
            ExitCode::from(2)
        }
    }
}

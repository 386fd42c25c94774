use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qlab_cli::commands::{cmd_bound, cmd_relax, cmd_run, cmd_scaling, cmd_sweep, cmd_verify};
use qlab_cli::plot::cmd_plot;
use qlab_cli::{parse_scenario, CliError, Outcome, Overrides, Result};

#[derive(Parser)]
#[command(name = "qlab", version, about = "Grid quantum dynamics with Ehrenfest-type verification")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Suppress the summary on stdout.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Args)]
struct Common {
    /// Scenario TOML file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Tolerance override, repeatable: `--tolerance residual=1e-5`.
    #[arg(long = "tolerance", value_parser = parse_tolerance)]
    tolerances: Vec<(String, f64)>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve and write series.csv.
    Run(Common),
    /// Evolve and check the Ehrenfest relations, identities and hypothesis trace.
    Verify(Common),
    /// Estimate the relative bound curve C(alpha).
    Bound(Common),
    /// Softening sweep of the regularized 3D Coulomb potential.
    Scaling(Common),
    /// Imaginary-time relaxation to the ground state.
    Relax(Common),
    /// Run one scenario over a list of parameter values.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Dotted scenario key, e.g. `evolution.dt`.
        #[arg(long)]
        parameter: Option<String>,
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
    },
    /// SVG plots from a series CSV and optionally a bound report.
    Plot {
        series: PathBuf,
        #[arg(long)]
        bound: Option<PathBuf>,
        /// Defaults to the directory of the series file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_tolerance(s: &str) -> std::result::Result<(String, f64), String> {
    let (name, value) = s.split_once('=').ok_or("expected name=value")?;
    let v: f64 = value.trim().parse().map_err(|_| format!("bad number '{value}'"))?;
    Ok((name.trim().to_string(), v))
}

fn load(c: &Common) -> Result<qlab_cli::Scenario> {
    let over = Overrides {
        seed: c.seed,
        tolerances: c.tolerances.clone(),
        output_dir: c.out.clone(),
    };
    parse_scenario(&c.config, &over)
}

fn dispatch(cmd: Command) -> Result<Outcome> {
    match cmd {
        Command::Run(c) => cmd_run(&load(&c)?),
        Command::Verify(c) => cmd_verify(&load(&c)?),
        Command::Bound(c) => cmd_bound(&load(&c)?),
        Command::Scaling(c) => cmd_scaling(&load(&c)?),
        Command::Relax(c) => cmd_relax(&load(&c)?),
        Command::Sweep {
            common,
            parameter,
            values,
        } => cmd_sweep(&load(&common)?, parameter.as_deref(), values.as_deref()),
        Command::Plot { series, bound, out } => {
            let dir = out.unwrap_or_else(|| series.parent().map(PathBuf::from).unwrap_or_default());
            cmd_plot(&series, bound.as_deref(), &dir)
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("QLAB_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Usage(format!("QLAB_THREADS must be a positive integer, got '{v}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let quiet = cli.quiet;
    let result = configure_threads().and_then(|_| dispatch(cli.command));
    match result {
        Ok(out) => {
            if !quiet {
                for line in &out.summary {
                    println!("{line}");
                }
            } else {
                for line in out.summary.iter().filter(|l| l.starts_with("FAIL")) {
                    eprintln!("{line}");
                }
            }
            if out.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

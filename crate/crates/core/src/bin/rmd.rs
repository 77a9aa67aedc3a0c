use std::fs::File;
use std::io::{self, BufWriter};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use rmd::harness::config::COMMAND_LINE;
use rmd::harness::summary::write_summary;
use rmd::harness::{run_experiment_with, summarize, ExperimentConfig};
use rmd::model::Dataset;
use rmd::numerics::DenseVector;
use rmd::oracle::{
    min_norm_l2, min_potential_dual, regularized_reference, ridge_closed_form,
    InterpolationProblem, RegularizedProblem,
};
use rmd::potential::PotentialSpec;
use rmd::{Error, Result};

#[derive(Parser)]
#[command(
    name = "rmd",
    version,
    about = "Regularizer mirror descent experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the sweep described by a config file.
    Run(Box<RunArgs>),
    /// Summarize a metrics CSV by final epoch.
    Summarize {
        csv: PathBuf,
        /// Write the summary here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve a linear subproblem exactly and print the weights.
    Oracle(OracleArgs),
}

#[derive(Args)]
struct RunArgs {
    config: PathBuf,
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long)]
    eta: Option<String>,
    #[arg(long)]
    potential: Option<String>,
    #[arg(long)]
    algorithm: Option<String>,
    #[arg(long)]
    corruption: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    stop_window: Option<String>,
    #[arg(long)]
    stop_tol: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overwrite an existing output file.
    #[arg(long)]
    force: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleKind {
    /// Minimum ℓ2-norm interpolant
    MinNorm,
    /// Minimum-potential (or Bregman to --anchor) interpolant
    MinPotential,
    /// Closed-form ridge with optional anchor
    Ridge,
    /// Iterative minimizer of λ·½‖y − Xw‖² + ψ(w) (or D_ψ to --anchor)
    Reference,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(value_enum)]
    kind: OracleKind,
    /// Headerless CSV, one sample per row, target in the last column.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "l2")]
    potential: PotentialSpec,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// File with one comma-separated weight vector.
    #[arg(long)]
    anchor: Option<PathBuf>,
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => run(*args),
        Command::Summarize { csv, out } => {
            let summary = summarize(&csv)?;
            match out {
                Some(path) => write_summary(&summary, BufWriter::new(File::create(path)?)),
                None => write_summary(&summary, io::stdout().lock()),
            }
        }
        Command::Oracle(args) => oracle(args),
    }
}

fn run(args: RunArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::from_file(&args.config)?;
    let overrides = [
        ("lambda", args.lambda),
        ("eta", args.eta),
        ("potential", args.potential),
        ("algorithm", args.algorithm),
        ("corruption", args.corruption),
        ("seed", args.seed),
        ("batch_size", args.batch_size),
        ("epochs", args.epochs),
        ("stop_window", args.stop_window),
        ("stop_tol", args.stop_tol),
    ];
    for (key, value) in overrides {
        if let Some(v) = value {
            cfg.set(key, &v, COMMAND_LINE)?;
        }
    }
    if let Some(out) = args.out {
        cfg.out = out;
    }
    cfg.force |= args.force;
    cfg.validate()?;

    let cells = cfg.grid().len();
    let rows = run_experiment_with(&cfg, &|cell, rows| {
        if let Some(last) = rows.last() {
            let lambda = cell
                .lambda
                .map_or_else(|| "NA".to_string(), |l| l.to_string());
            eprintln!(
                "[{}/{cells}] {} lambda={lambda} eta={}: epoch {} train {:.2}% test {:.2}% ({})",
                cell.index + 1,
                cell.algorithm,
                cell.eta,
                last.epoch,
                last.train_accuracy,
                last.test_accuracy,
                last.stop_reason,
            );
        }
    })?;
    eprintln!("wrote {} rows to {}", rows.len(), cfg.out.display());
    Ok(())
}

fn oracle(args: OracleArgs) -> Result<()> {
    let data = Dataset::load_csv(&args.data)?;
    let problem = InterpolationProblem::new(data.design_matrix(), data.labels().into())?;
    let anchor = args.anchor.as_deref().map(read_vector).transpose()?;
    let w = match args.kind {
        OracleKind::MinNorm => min_norm_l2(&problem)?,
        OracleKind::MinPotential => min_potential_dual(&problem, &args.potential, anchor.as_ref())?,
        OracleKind::Ridge => ridge_closed_form(&RegularizedProblem::new(
            problem,
            args.lambda,
            PotentialSpec::SquaredL2,
            anchor,
        )?)?,
        OracleKind::Reference => regularized_reference(&RegularizedProblem::new(
            problem,
            args.lambda,
            args.potential,
            anchor,
        )?)?,
    };
    let line: Vec<String> = w.iter().map(|v| v.to_string()).collect();
    println!("{}", line.join(","));
    Ok(())
}

fn read_vector(path: &std::path::Path) -> Result<DenseVector> {
    std::fs::read_to_string(path)?
        .split([',', '\n', ' ', '\t'])
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("bad anchor entry `{t}`")))
        })
        .collect()
}

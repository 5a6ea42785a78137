//! `targetctl`: existence checks, controller synthesis, augmentation and
//! observer design from recorded trajectories.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use targetctl::{Error, RankTolerance};

#[derive(Debug, Parser)]
#[command(name = "targetctl", version, about = "Data-driven target output control for discrete-time LTI systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct Common {
    /// Relative rank cutoff (scaled by sigma_max * max(rows, cols)).
    #[arg(long, global = true, value_name = "TOL")]
    rank_tol: Option<f64>,
    /// Output path; stdout when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
}

impl Common {
    fn tolerance(&self) -> Result<RankTolerance<f64>, Error> {
        match self.rank_tol {
            None => Ok(RankTolerance::default()),
            Some(v) if v.is_finite() && v >= 0.0 => Ok(RankTolerance::Relative(v)),
            Some(v) => Err(Error::OutOfRange(format!("rank tolerance {v} must be finite and non-negative"))),
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Report whether a target output controller of order r exists.
    Check {
        #[arg(long)]
        data: PathBuf,
        /// Plant JSON; adds the model-based verdict for comparison.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Design the gain K placing the given poles.
    Synthesize {
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated complex poles, conjugates explicit (`0.3+0.1i,0.3-0.1i`).
        #[arg(long, allow_hyphen_values = true, required_unless_present = "stabilize")]
        poles: Option<String>,
        /// Stabilize instead: reflect unstable eigenvalues of T2 to modulus 0.5.
        #[arg(long, conflicts_with = "poles")]
        stabilize: bool,
        /// Plant JSON; verifies the design against the true model.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Minimum-order target augmentation followed by pole placement.
    Augment {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        poles: String,
        /// Hankel depth; defaults to the state dimension.
        #[arg(long)]
        t: Option<usize>,
    },
    /// Design a state observer from input/state/output data.
    Observe {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        obs_poles: String,
        /// Controller poles; also assembles the observer-based controller.
        #[arg(long, allow_hyphen_values = true)]
        poles: Option<String>,
    },
    /// Record an open-loop experiment on a known plant.
    Generate {
        #[command(flatten)]
        plant: PlantSource,
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = InputKind::Uniform)]
        input: InputKind,
    },
    /// Roll out a closed loop on a known plant and write the trace as CSV.
    Simulate {
        #[command(flatten)]
        plant: PlantSource,
        /// Controller JSON from `synthesize` or `augment`.
        #[arg(long)]
        controller: PathBuf,
        /// Observer JSON from `observe`; state feedback when omitted.
        #[arg(long)]
        observer: Option<PathBuf>,
        #[arg(long, default_value_t = 50)]
        steps: usize,
        /// Seed for x(0); the observer starts from zero.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Regenerate a benchmark case end to end and check its reference values.
    Demo {
        #[arg(value_enum)]
        case: CaseArg,
        /// First seed tried for the experiment.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Model-based evaluation of the existence conditions.
    Oracle {
        #[command(flatten)]
        plant: PlantSource,
        /// Dataset to compare the data-driven verdict against.
        #[arg(long)]
        data: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct PlantSource {
    /// Plant JSON with keys A, B, C (optional) and F.
    #[arg(long)]
    model: Option<PathBuf>,
    /// One of the built-in benchmark cases.
    #[arg(long, value_enum)]
    case: Option<CaseArg>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CaseArg {
    Case1,
    Case2,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum InputKind {
    Uniform,
    Gaussian,
}

/// Exit status for each error kind.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::UncontrollablePair { .. }
        | Error::NotStabilizable { .. }
        | Error::NestingViolated { .. }
        | Error::SelectionFailure { .. }
        | Error::Step1Failed
        | Error::Step3Failed { .. } => 3,
        Error::NotObservable { .. } => 4,
        Error::Excitation(_) | Error::RankDeficientZp { .. } => 5,
        Error::EigenFailure { .. }
        | Error::IllConditionedAssignment { .. }
        | Error::ResidualTooLarge { .. }
        | Error::OracleMismatch { .. } => 6,
        Error::InvalidMatrix(_)
        | Error::DimensionMismatch(_)
        | Error::BadPoleSet(_)
        | Error::Schema(_)
        | Error::RaggedData(_)
        | Error::MissingChannel(_)
        | Error::OutOfRange(_)
        | Error::Io(_)
        | Error::Json(_)
        | Error::Csv(_) => 1,
    }
}

fn main() -> ExitCode {
    // usage errors exit 1; clap's own default (2) is the asymptotic-only verdict
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match commands::run(cli.command, &cli.common) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

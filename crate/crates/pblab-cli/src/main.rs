//! Thin front end over [`pblab::runner`]: parse flags, read the config file,
//! dispatch one command, print its summary, and exit with the command's code.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use pblab::error::Error;
use pblab::runner::{self, CmdOutcome, Overrides};
use pblab::solver::ObjectiveKind;

#[derive(Parser)]
#[command(name = "pblab", version, about = "Poisson bracket invariants of planar set tuples")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured invariant estimator and write its witness.
    Estimate(RunArgs),
    /// Certify a map's Jacobian bound over a sampling region.
    Certify(RunArgs),
    /// Verify the configured theorem inequalities.
    Theorems(RunArgs),
    /// Search for Hamiltonian flow chords between two sets.
    Chords(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Directory the artifacts are written into.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the schedule's restart seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the grid's node count along x.
    #[arg(long = "grid-override", value_name = "NX")]
    grid_nx: Option<usize>,
    /// Overrides the smoothing objective.
    #[arg(long, value_enum)]
    objective: Option<ObjectiveArg>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    /// Smoothed supremum of the absolute bracket.
    Sup,
    /// Smoothed signed maximum of the bracket.
    Max,
}

impl From<ObjectiveArg> for ObjectiveKind {
    fn from(a: ObjectiveArg) -> ObjectiveKind {
        match a {
            ObjectiveArg::Sup => ObjectiveKind::Sup,
            ObjectiveArg::Max => ObjectiveKind::Max,
        }
    }
}

fn execute(
    args: &RunArgs,
    run: fn(&str, &Path, &Overrides) -> pblab::Result<CmdOutcome>,
) -> pblab::Result<CmdOutcome> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", args.config.display())))?;
    let ov = Overrides {
        seed: args.seed,
        grid_nx: args.grid_nx,
        objective: args.objective.map(ObjectiveKind::from),
    };
    run(&text, &args.out, &ov)
}

fn main() {
    let cli = Cli::parse();
    let (args, run): (_, fn(&str, &Path, &Overrides) -> pblab::Result<CmdOutcome>) =
        match &cli.command {
            Command::Estimate(a) => (a, runner::cmd_estimate as _),
            Command::Certify(a) => (a, runner::cmd_certify as _),
            Command::Theorems(a) => (a, runner::cmd_theorems as _),
            Command::Chords(a) => (a, runner::cmd_chords as _),
        };
    let code = match execute(args, run) {
        Ok(out) => {
            println!("{}", out.summary);
            out.exit
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    std::process::exit(code);
}

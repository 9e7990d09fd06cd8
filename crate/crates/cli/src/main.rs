use std::path::PathBuf;
use std::process::ExitCode;

use anderson_core::harness::{self, ExperimentKind, ExperimentSpec};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "anderson", version, about = "Desk-scale experiments on lattice Anderson Hamiltonians")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Characteristic-function decay, moments, density and interval probabilities.
    Charfn(RunArgs),
    /// Frozen-bath Wegner estimate.
    Wegner(RunArgs),
    /// Spectral gap between two distant cubes.
    Evcomp(RunArgs),
    /// Initial length-scale probe.
    Ils(RunArgs),
    /// Fixed-energy multiscale analysis.
    Msa(RunArgs),
    /// Eigenfunction localization diagnostics.
    Localize(RunArgs),
    /// Validate a configuration without running it.
    Validate(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    override_constraints: bool,
}

fn load(args: &RunArgs, kind: Option<ExperimentKind>) -> anderson_core::Result<ExperimentSpec> {
    let mut spec = ExperimentSpec::load(&args.config)?;
    if let Some(k) = kind {
        if spec.experiment != k {
            return Err(anderson_core::Error::Config(format!(
                "config describes a `{}` experiment, not `{}`",
                spec.experiment.name(),
                k.name()
            )));
        }
    }
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    if let Some(t) = args.trials {
        spec.trials = t;
    }
    if args.out.is_some() {
        spec.out = args.out.clone();
    }
    spec.override_constraints |= args.override_constraints;
    Ok(spec)
}

fn fail(e: anderson_core::Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(harness::exit_code(&e) as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (args, kind) = match &cli.command {
        Command::Charfn(a) => (a, Some(ExperimentKind::Charfn)),
        Command::Wegner(a) => (a, Some(ExperimentKind::Wegner)),
        Command::Evcomp(a) => (a, Some(ExperimentKind::Evcomp)),
        Command::Ils(a) => (a, Some(ExperimentKind::Ils)),
        Command::Msa(a) => (a, Some(ExperimentKind::Msa)),
        Command::Localize(a) => (a, Some(ExperimentKind::Localize)),
        Command::Validate(a) => (a, None),
    };
    let spec = match load(args, kind) {
        Ok(s) => s,
        Err(e) => return fail(e),
    };
    if kind.is_none() {
        return match spec.validate() {
            Ok(v) => {
                println!("{}", serde_json::to_string_pretty(&v).expect("validation serializes"));
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        };
    }
    let report = match harness::run(&spec, args.threads) {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    let dir = spec.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    match report.write(&dir) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => fail(e),
    }
}

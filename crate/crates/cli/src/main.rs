use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gsb_renorm::config::{Mode, Overrides};
use gsb_renorm::output::summary_text;
use gsb_renorm::{assume_check, report, run, ConfigSource, Invocation, RunError};

#[derive(Parser)]
#[command(
    name = "gsb-renorm",
    version,
    about = "Truncated-Fock experiments for generalized spin-boson renormalization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// CCR, adjointness, number bounds and the completed square.
    Kinematics(RunArgs),
    /// Dressing transformation checks.
    DressingCheck(RunArgs),
    /// Case-2 cutoff ladder of renormalized resolvents.
    Sweep(RunArgs),
    /// Fiber decomposition and the triviality trend.
    Triviality {
        #[command(flatten)]
        run: RunArgs,
        /// Only print the single-coupling assumption certificate.
        #[arg(long)]
        assume_check: bool,
    },
    /// Print the summaries of earlier runs.
    Report {
        /// A run directory, or a directory holding several.
        #[arg(default_value = "runs")]
        dir: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// Name of a shipped preset instead of a config file.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    nmax: Option<usize>,
    #[arg(long)]
    modes: Option<usize>,
}

impl RunArgs {
    fn source(&self) -> ConfigSource {
        match (&self.config, &self.preset) {
            (Some(p), _) => ConfigSource::Path(p.clone()),
            (None, Some(n)) => ConfigSource::Preset(n.clone()),
            (None, None) => unreachable!("clap requires one of them"),
        }
    }

    fn overrides(&self) -> Overrides {
        Overrides { seed: self.seed, n_max: self.nmax, n_modes: self.modes }
    }

    fn invocation(&self, mode: Mode) -> Invocation {
        Invocation { source: self.source(), mode: Some(mode), out: self.out.clone(), overrides: self.overrides() }
    }
}

fn fail(e: RunError) -> ExitCode {
    eprintln!("gsb-renorm: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn execute(inv: Invocation) -> ExitCode {
    match run(&inv) {
        Ok(outcome) => {
            print!("{}", summary_text(&outcome.criteria));
            println!("results in {}", outcome.out_dir.display());
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => fail(e),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Kinematics(a) => execute(a.invocation(Mode::Kinematics)),
        Command::DressingCheck(a) => execute(a.invocation(Mode::DressingChecks)),
        Command::Sweep(a) => execute(a.invocation(Mode::Case2Convergence)),
        Command::Triviality { run: a, assume_check: true } => match assume_check(&a.source(), &a.overrides()) {
            Ok((text, holds)) => {
                println!("{text}");
                ExitCode::from(if holds { 0 } else { 1 })
            }
            Err(e) => fail(e),
        },
        Command::Triviality { run: a, .. } => execute(a.invocation(Mode::Triviality)),
        Command::Report { dir } => match report(&dir) {
            Ok(text) => {
                print!("{text}");
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
    }
}

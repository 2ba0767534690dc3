use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gradeq_cli::{run_command, Command, Format, Overrides, RunConfig};
use gradeq_core::welfare_poa::Game;

#[derive(Parser)]
#[command(name = "gradeq", version, about = "Equilibria and price of anarchy for grading and early-contracting markets")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Truthful mapping and optimal welfare.
    Truthful(Common),
    /// Strategic-grading equilibrium and its verification.
    GradingEq(Common),
    /// Early-contracting equilibrium and its verification.
    EarlyEq(Common),
    /// Welfare ratio and the applicable bounds.
    Poa(Common),
    /// Checks a hand-supplied grading curve.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        curve: PathBuf,
    },
    /// Power-family sweep against its closed form.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        xs: Option<Vec<f64>>,
    },
    /// Regenerates the bundled example reports.
    Reproduce(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum GameArg {
    Grading,
    EarlyUniform,
    EarlyCascade,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long, value_enum)]
    game: Option<GameArg>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "json")]
    format: Vec<Format>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tolerance: Option<f64>,
}

fn config(command: Command, c: Common) -> RunConfig {
    RunConfig {
        command,
        scenario_path: c.scenario,
        curve_path: None,
        game: c.game.map(|g| match g {
            GameArg::Grading => Game::Grading,
            GameArg::EarlyUniform => Game::EarlyUniform,
            GameArg::EarlyCascade => Game::EarlyCascade,
        }),
        output_dir: c.out,
        formats: c.format,
        overrides: Overrides { epsilon: c.epsilon, delta: c.delta, grid: c.grid, tolerance: c.tolerance, seed: c.seed },
        xs: None,
    }
}

fn main() -> ExitCode {
    let cfg = match Cli::parse().command {
        Sub::Truthful(c) => config(Command::Truthful, c),
        Sub::GradingEq(c) => config(Command::GradingEq, c),
        Sub::EarlyEq(c) => config(Command::EarlyEq, c),
        Sub::Poa(c) => config(Command::Poa, c),
        Sub::Verify { common, curve } => RunConfig { curve_path: Some(curve), ..config(Command::Verify, common) },
        Sub::Sweep { common, xs } => RunConfig { xs, ..config(Command::Sweep, common) },
        Sub::Reproduce(c) => config(Command::Reproduce, c),
    };
    match run_command(&cfg) {
        Ok(out) => {
            for f in &out.files {
                println!("{}", f.display());
            }
            for f in &out.failures {
                eprintln!("failed: {f}");
            }
            ExitCode::from(out.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

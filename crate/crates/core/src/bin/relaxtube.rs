use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use relaxtube::cli::{run_files, Overrides, Task};

#[derive(Parser)]
#[command(name = "relaxtube", version, about = "Relaxed differential inclusions: simulation, tube approximation, stability sampling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the inclusion with a selection policy
    Simulate(Common),
    /// Integrate the convexified inclusion towards a target velocity
    Relax(Common),
    /// Build a trajectory of the original inclusion inside a tube around a relaxed one
    Approximate(Common),
    /// Run the escape and bounded-witness scenarios of the three-state counterexample
    Counterexample(Common),
    /// Sample stability margin, attraction times and crossing times
    Stability(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario JSON file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    step: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (task, c) = match cli.command {
        Command::Simulate(c) => (Task::Simulate, c),
        Command::Relax(c) => (Task::Relax, c),
        Command::Approximate(c) => (Task::Approximate, c),
        Command::Counterexample(c) => (Task::Counterexample, c),
        Command::Stability(c) => (Task::Stability, c),
    };
    let ov = Overrides {
        seed: c.seed,
        horizon: c.horizon,
        step: c.step,
    };
    let outcome = run_files(task, c.config.as_deref(), &ov, &c.out);
    match &outcome.report.error {
        Some(e) => eprintln!("relaxtube {}: {} ({})", task.name(), e.message, e.kind),
        None => eprintln!("relaxtube {}: ok, wrote {}", task.name(), c.out.display()),
    }
    ExitCode::from(outcome.exit_code as u8)
}

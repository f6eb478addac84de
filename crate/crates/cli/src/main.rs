use clap::Parser;

use asi_cli::commands::{eval, gen, gradcheck, sweep, train};
use asi_cli::{exit_code, init_thread_pool};

#[derive(Debug, Parser)]
#[command(
    name = "asi",
    about = "Train and evaluate temporally abstract dynamics models",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Subcommand)]
enum Command {
    /// Generate a trajectory dataset file
    Gen(gen::GenArgs),
    /// Train a dynamics model and record metrics
    Train(train::TrainArgs),
    /// Evaluate a checkpoint's label-prediction accuracy
    Eval(eval::EvalArgs),
    /// Sweep fixed skip intervals and report loss rates
    Sweep(sweep::SweepArgs),
    /// Check analytic gradients against central differences
    Gradcheck(gradcheck::GradcheckArgs),
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are success, anything else is usage.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    init_thread_pool();
    let result = match &cli.command {
        Command::Gen(args) => gen::run(args),
        Command::Train(args) => train::run(args),
        Command::Eval(args) => eval::run(args),
        Command::Sweep(args) => sweep::run(args),
        Command::Gradcheck(args) => gradcheck::run(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(exit_code(&e));
    }
}

//! Command-line front end: dataset synthesis, training, evaluation,
//! benchmarking and the acquisition cost table.

pub mod args;
mod commands;
pub mod eval;

pub use args::Cli;
use args::Command;

/// Runs a parsed command. `argv` is recorded in the header line of every
/// CSV the command writes.
pub fn run(cli: &Cli, argv: &[String]) -> anyhow::Result<()> {
    let provenance = format!(
        "# specsense {}",
        argv.iter().skip(1).cloned().collect::<Vec<_>>().join(" ")
    );
    match &cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Train(t) => commands::train(t, &provenance),
        Command::Eval(a) => commands::eval(a, &provenance),
        Command::Bench(a) => commands::bench(a, &provenance),
        Command::Cost(a) => commands::cost(a, &provenance),
    }
}

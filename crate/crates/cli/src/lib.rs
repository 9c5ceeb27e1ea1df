//! Library backing the `deeperbind` binary; exposed so integration tests can
//! exercise rendering and parsing directly.

pub mod args;
pub mod config;
pub mod csvio;
pub mod data_cmds;
pub mod eval_cmds;
pub mod svg;
pub mod train_cmds;

use clap::Parser;

use args::{Cli, Command};

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Encode(args) => data_cmds::encode(&args),
        Command::Generate(args) => data_cmds::generate(&args),
        Command::Train(args) => train_cmds::train(&args),
        Command::Grid(args) => train_cmds::grid(&args),
        Command::Evaluate(args) => eval_cmds::evaluate(&args),
        Command::Experiment(args) => eval_cmds::experiment(&args),
        Command::Plot(args) => eval_cmds::plot(&args),
    }
}

/// Full CLI entry point. Exit codes: 0 success (including --help/--version),
/// 1 runtime or data failure, 2 usage error.
pub fn run(argv: Vec<String>) -> i32 {
    let argv = match config::expand_config(argv) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e:#}");
            return 1;
        }
    };
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod compare;
mod gen;
mod io;
mod run;
mod stats;

/// Simulate decentralized closeness-centrality view construction.
#[derive(Parser, Debug)]
#[command(name = "netview", version)]
struct Cli {
    /// Output directory.
    #[arg(long, global = true, env = "NETVIEW_OUT", default_value = "netview-out")]
    out: PathBuf,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Generate random geometric graphs or the reference graph.
    Gen(gen::GenArgs),
    /// Run protocols on graphs and write one report per configuration.
    Run(run::RunArgs),
    /// Compare paired reports of two protocols.
    Compare(compare::CompareArgs),
    /// Statistical tests on CSV columns or graph centralities.
    Stats(stats::StatsArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::Gen(a) => gen::cmd_gen(a, &cli.out),
        Cmd::Run(a) => run::cmd_run(a, &cli.out),
        Cmd::Compare(a) => compare::cmd_compare(a, &cli.out),
        Cmd::Stats(a) => stats::cmd_stats(a, &cli.out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => match e.downcast_ref::<io::Exit>() {
            Some(x) => {
                eprintln!("error: {}", x.msg);
                ExitCode::from(x.code)
            }
            None => {
                eprintln!("error: {e:#}");
                ExitCode::from(io::EXIT_FAILURE)
            }
        },
    }
}

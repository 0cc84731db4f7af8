use clap::Parser;
use momentcard_cli::{run, Cli, RunSpec};

fn main() {
    let cli = Cli::parse();
    std::process::exit(run(&RunSpec::from(cli.command)));
}

use clap::Parser;
use flexgrid::cli::{run, Cli};

fn main() {
    std::process::exit(run(Cli::parse()));
}

use clap::Parser;
use duplex_cli::simgen::{run, SimgenArgs};

fn main() -> anyhow::Result<()> {
    duplex_cli::init_logging();
    run(&SimgenArgs::parse())
}

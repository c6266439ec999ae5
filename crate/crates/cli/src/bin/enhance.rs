use clap::Parser;
use duplex_cli::enhance::{run, summary, EnhanceArgs};

fn main() -> anyhow::Result<()> {
    duplex_cli::init_logging();
    let stats = run(&EnhanceArgs::parse())?;
    println!("{}", summary(&stats));
    Ok(())
}

//! Aggregates a rated run into the per-cell quality and latency table.

use std::path::PathBuf;

use casa::eval::{aggregate, load_records, render_csv, render_table};
use clap::{Parser, ValueEnum};

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Csv,
}

#[derive(Parser)]
#[command(about = "Print average quality and latency per context/command cell")]
struct Args {
    #[arg(long = "in")]
    dir: PathBuf,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
}

fn main() -> anyhow::Result<()> {
    casa_cli::init_tracing();
    let args = Args::parse();
    let report = aggregate(&load_records(&args.dir)?)?;
    match args.format {
        Format::Table => print!("{}", render_table(&report)),
        Format::Csv => print!("{}", render_csv(&report)),
    }
    Ok(())
}

//! Writes a review file for a rater, or imports the rater's completed one.

use std::path::PathBuf;

use casa::eval::{import_review_file, load_records, write_review_file};
use clap::Parser;

#[derive(Parser)]
#[command(about = "Collect 0/1 quality labels for a run directory")]
struct Args {
    #[arg(long = "in")]
    dir: PathBuf,
    #[arg(long)]
    rater: String,
    /// A completed review file to import. Without it a blank one is written.
    #[arg(long)]
    labels: Option<PathBuf>,
}

fn main() -> anyhow::Result<()> {
    casa_cli::init_tracing();
    let args = Args::parse();
    match args.labels {
        Some(path) => {
            let n = import_review_file(&args.dir, &args.rater, &path)?;
            println!("stored {n} labels from rater {}", args.rater);
        }
        None => {
            let records = load_records(&args.dir)?;
            let path = write_review_file(&args.dir, &args.rater, &records)?;
            println!(
                "fill in \"label\" (0 or 1) on every line of {}, then rerun with --labels",
                path.display()
            );
        }
    }
    Ok(())
}

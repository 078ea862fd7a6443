//! Runs the evaluation grid and writes `trials.jsonl` into the output directory.

use std::path::PathBuf;

use anyhow::Context;
use casa::eval::{parse_cells, run_matrix, TrialWriter};
use casa::gateway::{BackendConfig, Gateway};
use clap::{Parser, ValueEnum};

#[derive(Clone, Copy, ValueEnum)]
enum Backend {
    Mock,
    Remote,
}

#[derive(Parser)]
#[command(about = "Run every context/command cell N times against a completion backend")]
struct Args {
    #[arg(long, value_enum, default_value = "mock")]
    backend: Backend,
    /// Completions endpoint URL (remote backend).
    #[arg(long, env = "CASA_ENDPOINT")]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// Seconds per completion.
    #[arg(long, default_value_t = 60.0)]
    timeout: f64,
    #[arg(long, default_value_t = 10)]
    trials: u32,
    /// `all` or a comma list such as `Simple/Direct,Complex/AmbiguousWork`.
    #[arg(long, default_value = "all")]
    cells: String,
    #[arg(long)]
    out: PathBuf,
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    casa_cli::init_tracing();
    let args = Args::parse();
    let mut cfg = match args.backend {
        Backend::Mock => BackendConfig::mock(),
        Backend::Remote => BackendConfig::remote(
            args.endpoint
                .context("--endpoint or CASA_ENDPOINT is required for the remote backend")?,
        ),
    };
    if let Some(m) = args.model {
        cfg.model_name = m;
    }
    cfg.timeout_secs = args.timeout;
    let gateway = Gateway::new(cfg)?;
    let cells = parse_cells(&args.cells)?;
    let mut writer = TrialWriter::create(&args.out)?;
    let total = cells.len() * args.trials as usize;
    let mut done = 0;
    let records = run_matrix(&cells, args.trials, &gateway, |r| {
        done += 1;
        match &r.error {
            Some(e) => eprintln!("[{done}/{total}] {} failed: {} ({})", r.id, e.class, e.stage),
            None => eprintln!("[{done}/{total}] {} {:.3}s", r.id, r.latency),
        }
        writer.append(r)
    })
    .await?;
    let failed = records.iter().filter(|r| r.error.is_some()).count();
    println!(
        "{} trials written to {} ({failed} failed)",
        records.len(),
        args.out.display()
    );
    Ok(())
}

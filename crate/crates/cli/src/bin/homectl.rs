//! Runs the controller service and talks to a running one.

use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context};
use casa::service::{router, Controller, ServiceConfig};
use casa::simulator::SimulatedBridge;
use clap::{Parser, Subcommand};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(about = "Smart-home controller service and client")]
struct Args {
    /// Base URL of a running service (client subcommands).
    #[arg(long, global = true, env = "CASA_URL", default_value = "http://127.0.0.1:8080")]
    url: String,
    #[command(subcommand)]
    cmd: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Start the HTTP service.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Send a natural-language command.
    Cmd {
        text: String,
    },
    /// Print the current home state.
    State,
    /// List recent proposals, newest first.
    History {
        #[arg(long, default_value_t = 20)]
        limit: usize,
    },
    Approve {
        id: String,
    },
    Reject {
        id: String,
    },
    /// Run a simulated Hue bridge / smart plug endpoint.
    SimBridge {
        #[arg(long, default_value = "127.0.0.1:8000")]
        listen: String,
        /// Hue group ids to seed with `{"on": false}`.
        #[arg(long, value_delimiter = ',')]
        groups: Vec<u32>,
        /// Plug ids to seed as off.
        #[arg(long, value_delimiter = ',')]
        plugs: Vec<String>,
    },
}

async fn call(req: reqwest::RequestBuilder) -> anyhow::Result<Value> {
    let resp = req.send().await.context("service unreachable")?;
    let status = resp.status();
    let body: Value = resp.json().await.context("service returned non-JSON")?;
    if !status.is_success() {
        bail!("{status}: {}", body["message"].as_str().unwrap_or("request failed"));
    }
    Ok(body)
}

fn print_proposal(p: &Value) {
    println!(
        "{} {}",
        p["id"].as_str().unwrap_or("?"),
        p["status"].as_str().unwrap_or("?")
    );
    for c in p["changeset"]["changes"].as_array().into_iter().flatten() {
        println!(
            "  {}.{}.{}.{}: {} -> {}",
            c["room"].as_str().unwrap_or(""),
            c["device_type"].as_str().unwrap_or(""),
            c["device"].as_str().unwrap_or(""),
            c["property"].as_str().unwrap_or(""),
            c["old"],
            c["new"]
        );
    }
    for v in p["changeset"]["dropped"].as_array().into_iter().flatten() {
        println!(
            "  dropped {}: {}",
            v["path"].as_str().unwrap_or(""),
            v["detail"].as_str().unwrap_or("")
        );
    }
    if let Some(e) = p["error"].as_str() {
        println!("  error: {e}");
    }
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    casa_cli::init_tracing();
    let args = Args::parse();
    let client = reqwest::Client::new();
    let url = args.url.trim_end_matches('/');
    match args.cmd {
        Sub::Serve { config } => {
            let cfg = ServiceConfig::load(&config)?;
            let controller = Arc::new(Controller::from_config(&cfg)?);
            let listener = tokio::net::TcpListener::bind(&cfg.listen).await?;
            eprintln!("listening on http://{} ({:?} mode)", listener.local_addr()?, cfg.mode);
            axum::serve(listener, router(controller)).await?;
        }
        Sub::Cmd { text } => {
            let p = call(client.post(format!("{url}/command")).json(&json!({ "text": text }))).await?;
            print_proposal(&p);
        }
        Sub::State => {
            let s = call(client.get(format!("{url}/state"))).await?;
            println!("{}", serde_json::to_string_pretty(&s)?);
        }
        Sub::History { limit } => {
            let list = call(client.get(format!("{url}/proposals?limit={limit}"))).await?;
            for p in list.as_array().into_iter().flatten() {
                print_proposal(p);
            }
        }
        Sub::Approve { id } => print_proposal(&call(client.post(format!("{url}/proposals/{id}/approve"))).await?),
        Sub::Reject { id } => print_proposal(&call(client.post(format!("{url}/proposals/{id}/reject"))).await?),
        Sub::SimBridge { listen, groups, plugs } => {
            let bridge = SimulatedBridge::bind(&listen).await?;
            for g in groups {
                bridge.seed_group(g, json!({ "on": false }));
            }
            for p in &plugs {
                bridge.seed_plug(p, "off");
            }
            eprintln!("simulated bridge at {}", bridge.base_url());
            bridge.wait().await;
        }
    }
    Ok(())
}

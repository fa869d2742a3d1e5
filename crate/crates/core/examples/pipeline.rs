//! Run every stage from a config file, or from a small built-in config,
//! and print the manifest.
//!
//!     cargo run --release --example pipeline -- [config.json] [out_dir]

use std::path::PathBuf;

use gaplab::orchestrator::{load_config, run_pipeline, ExperimentConfig};

const SMALL: &str = r#"{
    "name": "small",
    "seed": 5,
    "corpus": {"tokens": 100000},
    "lm": {"embed_dim": 32, "hidden_dim": 32, "max_epochs": 1},
    "items": {"count": 12},
    "augmentation": {"n": 100}
}"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let mut config = match args.next() {
        Some(path) => load_config(path.as_ref())?,
        None => ExperimentConfig::from_json(SMALL)?,
    };
    if let Some(out) = args.next() {
        config.out_dir = PathBuf::from(out);
    }
    let manifest = run_pipeline(&config)?;
    for a in &manifest.artifacts {
        println!("{}  {:>9}  {}", &a.sha256[..12], a.bytes, a.path);
    }
    println!("report: {}", config.out_dir.join("report/report.md").display());
    Ok(())
}

//! Load a scenario file and run it to completion from its prompt script.
//!
//! `cargo run --example headless_scenario -- scenarios/e2e/relocate_00.json`

use std::path::PathBuf;

use mograsp::orchestrator::{load_scenario, run_scenario, ServerMessage};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/demo.json")));
    let config = load_scenario(&path)?;
    let run = run_scenario(&config)?;

    for line in run.log.lines().iter().skip(1) {
        if !line.contains(r#""type":"telemetry""#) {
            println!("{line}");
        }
    }
    let phases: Vec<&str> = run
        .log
        .lines()
        .iter()
        .filter_map(|l| serde_json::from_str::<mograsp::orchestrator::LogRecord>(l).ok())
        .filter_map(|r| match r {
            mograsp::orchestrator::LogRecord::Server { message: ServerMessage::Phase { name }, .. } => Some(name.name()),
            _ => None,
        })
        .collect();
    println!("phases: {}", phases.join(" -> "));
    print!("{}", run.report().to_csv());
    Ok(())
}

//! Record a session log, replay it, and confirm the two logs match byte
//! for byte.

use mograsp::orchestrator::{load_scenario, replay, run_scenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = load_scenario(concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/e2e/drift_00.json").as_ref())?;
    let original = run_scenario(&config)?;
    let path = std::env::temp_dir().join("mograsp_drift_00.ndjson");
    original.log.write_to(&path)?;

    let text = std::fs::read_to_string(&path)?;
    let again = replay(&text)?;
    println!("{} log lines, outcome {:?}", original.log.lines().len(), original.outcome.status);
    println!("replay identical: {}", again.log.to_ndjson() == text);
    Ok(())
}

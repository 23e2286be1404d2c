//! Run every scenario in a directory and summarise the metrics table.
//!
//! `cargo run --release --example batch_metrics -- scenarios/e2e`

use std::path::PathBuf;

use mograsp::orchestrator::run_batch;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/e2e")));
    let (report, _) = run_batch(&dir)?;
    print!("{}", report.to_csv());
    let errors: Vec<f64> = report.rows.iter().filter_map(|r| r.final_error).collect();
    let worst = errors.iter().cloned().fold(0.0, f64::max);
    println!("{}/{} succeeded, worst approach error {:.1} mm", report.successes(), report.rows.len(), worst * 1e3);
    Ok(())
}

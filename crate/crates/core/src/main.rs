use std::io::BufReader;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mograsp::orchestrator::{
    load_scenario, run_batch, run_scenario, serve, serve_stream, MetricsReport, MetricsRow, RunError, ScenarioConfig, ServiceOptions,
};

#[derive(Parser)]
#[command(name = "mograsp", version, about = "Segmentation-driven mobile grasping simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario, headless from its prompt script or interactively
    /// over stdin/stdout.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        headless: bool,
        #[arg(long)]
        metrics_out: Option<PathBuf>,
        #[arg(long)]
        log_out: Option<PathBuf>,
        /// Pace an interactive session to the control rate.
        #[arg(long)]
        realtime: bool,
    },
    /// Accept TCP clients on localhost, one session per connection.
    Serve {
        #[arg(long)]
        port: u16,
        #[arg(long)]
        scenario: PathBuf,
        /// Write each connection's session log here.
        #[arg(long)]
        log_dir: Option<PathBuf>,
        /// Tick as fast as possible instead of at the control rate.
        #[arg(long)]
        fast: bool,
    },
    /// Run every scenario file in a directory and write one metrics table.
    Batch {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        metrics_out: PathBuf,
        #[arg(long)]
        log_dir: Option<PathBuf>,
    },
}

fn load(path: &Path, seed: Option<u64>) -> Result<ScenarioConfig, RunError> {
    let mut config = load_scenario(path)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    Ok(config)
}

fn execute(cli: Cli) -> Result<(), RunError> {
    match cli.command {
        Command::Run { scenario, seed, headless, metrics_out, log_out, realtime } => {
            let config = load(&scenario, seed)?;
            let started = std::time::Instant::now();
            let (outcome, log) = if headless {
                let run = run_scenario(&config)?;
                (run.outcome, run.log)
            } else {
                let opts = ServiceOptions { realtime, ..ServiceOptions::default() };
                serve_stream(BufReader::new(std::io::stdin()), std::io::stdout(), &config, &opts)?
            };
            eprintln!("{}: {:?}", config.name, outcome.status);
            if let Some(path) = log_out {
                log.write_to(&path)?;
            }
            if let Some(path) = metrics_out {
                let row = MetricsRow::from_outcome(&config.name, &outcome, started.elapsed().as_secs_f64());
                MetricsReport::from_rows(vec![row]).write_csv_file(&path)?;
            }
            Ok(())
        }
        Command::Serve { port, scenario, log_dir, fast } => {
            let config = load(&scenario, None)?;
            if let Some(dir) = &log_dir {
                std::fs::create_dir_all(dir).map_err(|e| RunError::Io(format!("{}: {e}", dir.display())))?;
            }
            let listener = TcpListener::bind(("127.0.0.1", port)).map_err(|e| RunError::Io(format!("port {port}: {e}")))?;
            eprintln!("listening on {}", listener.local_addr().map_err(|e| RunError::Io(e.to_string()))?);
            serve(listener, config, ServiceOptions { realtime: !fast, log_dir, ..ServiceOptions::default() })
        }
        Command::Batch { dir, metrics_out, log_dir } => {
            let (report, runs) = run_batch(&dir)?;
            report.write_csv_file(&metrics_out)?;
            if let Some(log_dir) = log_dir {
                std::fs::create_dir_all(&log_dir).map_err(|e| RunError::Io(format!("{}: {e}", log_dir.display())))?;
                for run in &runs {
                    run.log.write_to(&log_dir.join(format!("{}.ndjson", run.row.scenario)))?;
                }
            }
            eprintln!("{}/{} succeeded", report.successes(), report.rows.len());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::control::OutcomeStatus;
use crate::perception::SegmenterBackend;

use super::config::{load_scenario, ScenarioConfig};
use super::protocol::{ClientMessage, ErrorCode, OutcomeRecord, ServerMessage};
use super::session::GraspSession;
use super::{ConfigError, RunError};

/// One line of a session log. Logs carry no wall-clock data, so identical
/// inputs give byte-identical logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogRecord {
    /// Always first: the full effective configuration.
    Config { config: ScenarioConfig },
    Client { tick: u64, message: ClientMessage },
    /// Input that failed to parse, kept verbatim so replays see it too.
    ClientMalformed { tick: u64, line: String },
    Server { tick: u64, message: ServerMessage },
}

/// Append-only newline-delimited JSON session record.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SessionLog {
    lines: Vec<String>,
}

impl SessionLog {
    pub fn new(config: &ScenarioConfig) -> Self {
        let mut log = Self::default();
        log.push(&LogRecord::Config { config: config.clone() });
        log
    }

    pub fn push(&mut self, record: &LogRecord) {
        self.lines.push(serde_json::to_string(record).expect("log records serialize"));
    }

    pub fn server(&mut self, tick: u64, messages: &[ServerMessage]) {
        for m in messages {
            self.push(&LogRecord::Server { tick, message: m.clone() });
        }
    }

    pub fn lines(&self) -> &[String] {
        &self.lines
    }

    pub fn to_ndjson(&self) -> String {
        let mut s = self.lines.join("\n");
        s.push('\n');
        s
    }

    pub fn write_to(&self, path: &Path) -> Result<(), RunError> {
        std::fs::write(path, self.to_ndjson()).map_err(|e| RunError::Io(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Vec<LogRecord>, RunError> {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| RunError::Replay(format!("line {}: {e}", i + 1))))
            .collect()
    }
}

/// Input delivered to a session before the given tick.
#[derive(Debug, Clone, PartialEq)]
pub enum Input {
    Message(ClientMessage),
    Raw(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub scenario: String,
    pub status: OutcomeStatus,
    pub final_error: Option<f64>,
    pub replans: u32,
    pub relocated: bool,
    pub ticks: u64,
    pub wall_time_s: f64,
}

impl MetricsRow {
    pub fn from_outcome(scenario: &str, o: &OutcomeRecord, wall_time_s: f64) -> Self {
        Self {
            scenario: scenario.to_owned(),
            status: o.status,
            final_error: o.final_error,
            replans: o.replans,
            relocated: o.relocated,
            ticks: o.ticks,
            wall_time_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub rows: Vec<MetricsRow>,
    /// Successes over scenarios; 0 for an empty report.
    pub success_rate: f64,
}

impl MetricsReport {
    pub fn from_rows(rows: Vec<MetricsRow>) -> Self {
        let success_rate = success_rate(&rows);
        Self { rows, success_rate }
    }

    pub fn successes(&self) -> usize {
        self.rows.iter().filter(|r| r.status == OutcomeStatus::Success).count()
    }

    /// Recomputes the aggregate from the rows.
    pub fn is_consistent(&self) -> bool {
        self.success_rate == success_rate(&self.rows)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), RunError> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.rows {
            out.serialize(r).map_err(|e| RunError::Io(e.to_string()))?;
        }
        out.flush().map_err(|e| RunError::Io(e.to_string()))
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<(), RunError> {
        let f = std::fs::File::create(path).map_err(|e| RunError::Io(format!("{}: {e}", path.display())))?;
        self.write_csv(f)
    }
}

fn success_rate(rows: &[MetricsRow]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    rows.iter().filter(|r| r.status == OutcomeStatus::Success).count() as f64 / rows.len() as f64
}

/// Result of one headless scenario run.
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub session: GraspSession,
    pub outcome: OutcomeRecord,
    pub log: SessionLog,
    pub row: MetricsRow,
}

impl ScenarioRun {
    pub fn report(&self) -> MetricsReport {
        MetricsReport::from_rows(vec![self.row.clone()])
    }
}

/// Runs a scenario headless from its prompt script.
pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioRun, RunError> {
    let script = config
        .script
        .as_ref()
        .filter(|s| !s.steps.is_empty())
        .ok_or_else(|| ConfigError::schema("script", "headless runs need a prompt script with at least one step"))?;
    let inputs: Vec<(u64, Input)> = script.steps.iter().map(|s| (s.tick, Input::Message(s.message.clone()))).collect();
    drive(config, inputs, script.auto_confirm)
}

/// Re-runs a session from its log and returns the new run; a faithful
/// replay produces an identical log.
pub fn replay(log_text: &str) -> Result<ScenarioRun, RunError> {
    let records = SessionLog::parse(log_text)?;
    let Some(LogRecord::Config { config }) = records.first() else {
        return Err(RunError::Replay("first record must be the configuration".into()));
    };
    let inputs = records
        .iter()
        .filter_map(|r| match r {
            LogRecord::Client { tick, message } => Some((*tick, Input::Message(message.clone()))),
            LogRecord::ClientMalformed { tick, line } => Some((*tick, Input::Raw(line.clone()))),
            _ => None,
        })
        .collect();
    drive(config, inputs, false)
}

fn deliver(session: &GraspSession, input: &Input, backend: &dyn SegmenterBackend, log: &mut SessionLog) -> (GraspSession, Vec<ServerMessage>) {
    let tick = session.scene.tick;
    let (next, out) = match input {
        Input::Message(m) => {
            log.push(&LogRecord::Client { tick, message: m.clone() });
            session.handle_message(m, backend)
        }
        Input::Raw(line) => {
            log.push(&LogRecord::ClientMalformed { tick, line: line.clone() });
            session.handle_line(line, backend)
        }
    };
    log.server(tick, &out);
    (next, out)
}

fn drive(config: &ScenarioConfig, mut inputs: Vec<(u64, Input)>, auto_confirm: bool) -> Result<ScenarioRun, RunError> {
    let started = Instant::now();
    let backend = config.build_segmenter()?;
    let mut session = GraspSession::new(config)?;
    let mut log = SessionLog::new(config);
    inputs.sort_by_key(|(t, _)| *t);
    let mut pending = inputs.into_iter().peekable();
    let mut segmentation_failed = false;
    while !session.is_done() {
        while let Some((_, input)) = pending.next_if(|(t, _)| *t <= session.scene.tick) {
            let (next, out) = deliver(&session, &input, backend.as_ref(), &mut log);
            session = next;
            for m in &out {
                match m {
                    ServerMessage::Error { code: ErrorCode::SegmentationFailed, .. } => segmentation_failed = true,
                    ServerMessage::Segmentation { .. } => segmentation_failed = false,
                    _ => {}
                }
            }
            let proposed = out.iter().any(|m| matches!(m, ServerMessage::Segmentation { .. }));
            if auto_confirm && proposed {
                let (next, _) = deliver(&session, &Input::Message(ClientMessage::confirm()), backend.as_ref(), &mut log);
                session = next;
            }
            if session.is_done() {
                break;
            }
        }
        if session.is_done() {
            break;
        }
        let stalled = pending.peek().is_none() && session.is_waiting();
        let over_time = session.scene.clock >= config.max_time;
        if stalled || over_time {
            let (status, detail) = if stalled && segmentation_failed {
                (OutcomeStatus::TargetLost, "prompt script ended without a usable segmentation".to_owned())
            } else if stalled {
                (OutcomeStatus::AbortedByUser, "prompt script ended before confirmation".to_owned())
            } else if session.is_waiting() {
                (OutcomeStatus::AbortedByUser, format!("time budget exhausted in {}", session.phase.name()))
            } else {
                (OutcomeStatus::IkFailure, format!("time budget exhausted in {}", session.phase.name()))
            };
            let (next, out) = session.terminate(status, detail);
            log.server(next.scene.tick, &out);
            session = next;
            break;
        }
        let (next, out) = session.tick(backend.as_ref());
        log.server(next.scene.tick, &out);
        session = next;
    }
    let outcome = session.outcome.clone().ok_or_else(|| RunError::Internal("session ended without an outcome".into()))?;
    let row = MetricsRow::from_outcome(&config.name, &outcome, started.elapsed().as_secs_f64());
    Ok(ScenarioRun { session, outcome, log, row })
}

/// Scenario files (`*.json`) in `dir`, sorted by file name.
pub fn scenario_files(dir: &Path) -> Result<Vec<PathBuf>, RunError> {
    let entries = std::fs::read_dir(dir).map_err(|e| RunError::Io(format!("{}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    Ok(files)
}

/// Loads every scenario in `dir` first, so a bad file fails the batch
/// before anything runs, then runs them in file-name order.
pub fn run_batch(dir: &Path) -> Result<(MetricsReport, Vec<ScenarioRun>), RunError> {
    let configs = scenario_files(dir)?
        .iter()
        .map(|p| load_scenario(p).map_err(|e| RunError::Config(ConfigError::InFile { path: p.display().to_string(), source: Box::new(e) })))
        .collect::<Result<Vec<_>, _>>()?;
    let runs = configs.iter().map(run_scenario).collect::<Result<Vec<_>, _>>()?;
    let report = MetricsReport::from_rows(runs.iter().map(|r| r.row.clone()).collect());
    Ok((report, runs))
}

//! Sessions, the wire protocol, headless runs, replays and the TCP service.
//!
//! A [`GraspSession`] is a pure state machine: client messages and control
//! ticks go in, server messages come out. The runner and the service only
//! decide when to feed it and where its output goes.

mod config;
mod protocol;
mod runner;
mod service;
mod session;

pub use config::{
    load_scenario, parse_scenario, ChainSpec, HandEyeSpec, ObjectSpec, ObstacleSpec, PromptScript, ScenarioConfig, ScriptStep,
    SegmenterSpec, SCENARIO_SCHEMA,
};
pub use protocol::{parse_client_line, ClientMessage, ErrorCode, OutcomeRecord, ServerMessage};
pub use runner::{
    replay, run_batch, run_scenario, scenario_files, Input, LogRecord, MetricsReport, MetricsRow, ScenarioRun, SessionLog,
};
pub use service::{serve, serve_stream, ServiceOptions};
pub use session::GraspSession;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("invalid JSON at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
    #[error("{path}: {source}")]
    InFile { path: String, source: Box<ConfigError> },
}

impl ConfigError {
    pub fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::Schema { path: path.into(), message: message.into() }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(#[from] ConfigError),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("replay error: {0}")]
    Replay(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl RunError {
    /// Process exit code: 2 for configuration problems, 3 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            _ => 3,
        }
    }
}

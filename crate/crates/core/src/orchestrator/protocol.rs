//! Newline-delimited JSON messages between the service and its clients.

use serde::{Deserialize, Serialize};

use crate::control::{OutcomeStatus, Phase, Telemetry};
use crate::perception::{MaskRle, Prompt};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    /// `{"type":"prompt","kind":"point","u":..,"v":..}` and the box/text forms.
    Prompt(Prompt),
    Confirm {},
    /// Discards the proposed segmentation and waits for a new prompt.
    Reject {},
    Abort {},
    /// Scales joint speed limits for subsequent plans, `0 < scale ≤ 1`.
    SetSpeed { scale: f64 },
}

impl ClientMessage {
    pub fn confirm() -> Self {
        ClientMessage::Confirm {}
    }

    pub fn reject() -> Self {
        ClientMessage::Reject {}
    }

    pub fn abort() -> Self {
        ClientMessage::Abort {}
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    /// Not valid JSON or not a known message shape.
    Malformed,
    /// Well-formed but not accepted in the current phase.
    OutOfPhase,
    InvalidArgument,
    SegmentationFailed,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRecord {
    pub status: OutcomeStatus,
    /// Tool distance from the true pre-grasp point when the approach ended.
    pub final_error: Option<f64>,
    pub replans: u32,
    pub relocated: bool,
    pub ticks: u64,
    pub t: f64,
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Frame { png_b64: String, t: f64 },
    Segmentation { mask_rle: MaskRle, score: f32, label: Option<String> },
    Telemetry(Telemetry),
    Phase { name: Phase },
    Outcome(OutcomeRecord),
    Error { code: ErrorCode, detail: String },
}

impl ServerMessage {
    pub fn error(code: ErrorCode, detail: impl Into<String>) -> Self {
        ServerMessage::Error { code, detail: detail.into() }
    }
}

/// Parses one wire line; failures are reported as a `Malformed` error reply.
pub fn parse_client_line(line: &str) -> Result<ClientMessage, ServerMessage> {
    serde_json::from_str(line.trim()).map_err(|e| ServerMessage::error(ErrorCode::Malformed, e.to_string()))
}

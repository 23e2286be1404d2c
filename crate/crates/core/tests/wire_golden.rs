//! One canonical line per wire message, shared with the operator console.
//! `MOGRASP_BLESS=1` rewrites the fixtures.

mod common;

use mograsp::codec::{decode_png_base64, png_base64};
use mograsp::control::{GripperTelemetry, OutcomeStatus, Phase, Telemetry};
use mograsp::kinematics::JointVector;
use mograsp::orchestrator::{parse_client_line, ClientMessage, ErrorCode, OutcomeRecord, ServerMessage};
use mograsp::perception::{Prompt, SegmentMask};

fn client_examples() -> Vec<ClientMessage> {
    vec![
        ClientMessage::Prompt(Prompt::Point { u: 132, v: 166 }),
        ClientMessage::Prompt(Prompt::Box { u0: 120, v0: 150, u1: 145, v1: 180 }),
        ClientMessage::Prompt(Prompt::Text { text: "plate".into() }),
        ClientMessage::confirm(),
        ClientMessage::reject(),
        ClientMessage::abort(),
        ClientMessage::SetSpeed { scale: 0.5 },
    ]
}

fn server_examples() -> Vec<ServerMessage> {
    let rgb = vec![[200, 40, 40], [40, 200, 40], [40, 40, 200], [255, 255, 255]];
    let mask = SegmentMask::from_predicate(4, 3, 1, |u, v| v == 1 && u >= 1);
    vec![
        ServerMessage::Frame { png_b64: png_base64(2, 2, &rgb).unwrap(), t: 0.1 },
        ServerMessage::Segmentation { mask_rle: mask.to_rle(), score: 0.875, label: Some("plate".into()) },
        ServerMessage::Telemetry(Telemetry {
            t: 1.5,
            phase: Phase::Approaching,
            theta: JointVector(vec![0.0, -0.5, 1.25, 0.0, 0.75, 0.0]),
            p_arm_est: Some([0.5, 0.25, 0.0]),
            p_arm_gt: Some([0.5, 0.25, -0.001]),
            gripper: GripperTelemetry { opening: 0.08, force: 0.0 },
            replans: 1,
        }),
        ServerMessage::Phase { name: Phase::SegmentedAwaitingConfirm },
        ServerMessage::Outcome(OutcomeRecord {
            status: OutcomeStatus::Success,
            final_error: Some(0.00125),
            replans: 2,
            relocated: false,
            ticks: 180,
            t: 3.6,
            detail: None,
        }),
        ServerMessage::error(ErrorCode::OutOfPhase, "confirm needs a segmentation"),
    ]
}

fn check(file: &str, lines: Vec<String>) {
    let path = common::fixtures_dir().join("protocol").join(file);
    let text = lines.join("\n") + "\n";
    if std::env::var_os("MOGRASP_BLESS").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, &text).unwrap();
        return;
    }
    let stored = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(stored, text, "{file} drifted");
}

#[test]
fn client_lines_match_fixture_and_parse_back() {
    let examples = client_examples();
    let lines: Vec<String> = examples.iter().map(|m| serde_json::to_string(m).unwrap()).collect();
    for (line, m) in lines.iter().zip(&examples) {
        assert_eq!(&parse_client_line(line).unwrap(), m);
    }
    check("client.ndjson", lines);
}

#[test]
fn server_lines_match_fixture_and_parse_back() {
    let examples = server_examples();
    let lines: Vec<String> = examples.iter().map(|m| serde_json::to_string(m).unwrap()).collect();
    for (line, m) in lines.iter().zip(&examples) {
        assert_eq!(&serde_json::from_str::<ServerMessage>(line).unwrap(), m);
    }
    let tags: Vec<String> = lines.iter().map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["type"].as_str().unwrap().to_owned()).collect();
    assert_eq!(tags, ["frame", "segmentation", "telemetry", "phase", "outcome", "error"]);
    check("server.ndjson", lines);
}

#[test]
fn frame_payload_is_a_decodable_png() {
    let ServerMessage::Frame { png_b64, .. } = &server_examples()[0] else { unreachable!() };
    let (w, h, rgb) = decode_png_base64(png_b64).unwrap();
    assert_eq!((w, h), (2, 2));
    assert_eq!(rgb[3], [255, 255, 255]);
}

//! Plugging in an out-of-process segmenter. The toy server here masks every
//! pixel near the prompt whose color differs from the frame's corner.

use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;

use mograsp::codec::decode_png_base64;
use mograsp::orchestrator::{parse_scenario, SegmenterSpec};
use mograsp::perception::{segment, Prompt, SegmentMask, SegmentRequest, SegmentResponse};
use mograsp::simworld::render_depth;

fn toy_server(listener: TcpListener) {
    for stream in listener.incoming().flatten() {
        let mut line = String::new();
        if BufReader::new(&stream).read_line(&mut line).is_err() {
            continue;
        }
        let response = match serde_json::from_str::<SegmentRequest>(&line) {
            Ok(req) => answer(&req),
            Err(e) => SegmentResponse { mask: None, score: 0.0, label: None, error: Some(e.to_string()) },
        };
        let mut out = &stream;
        let _ = writeln!(out, "{}", serde_json::to_string(&response).unwrap());
    }
}

fn answer(req: &SegmentRequest) -> SegmentResponse {
    let Ok((w, h, px)) = decode_png_base64(&req.color) else {
        return SegmentResponse { mask: None, score: 0.0, label: None, error: Some("bad image".into()) };
    };
    let (cu, cv) = match req.prompt {
        Prompt::Point { u, v } => (u as i64, v as i64),
        Prompt::Box { u0, v0, u1, v1 } => (((u0 + u1) / 2) as i64, ((v0 + v1) / 2) as i64),
        Prompt::Text { .. } => return SegmentResponse { mask: None, score: 0.0, label: None, error: Some("text prompts unsupported".into()) },
    };
    let background = px[(h as usize - 1) * w as usize];
    let mask = SegmentMask::from_predicate(w, h, 1, |u, v| {
        (u as i64 - cu).abs() < 40 && (v as i64 - cv).abs() < 40 && px[(v * w + u) as usize] != background
    });
    if mask.is_empty() {
        return SegmentResponse { mask: None, score: 0.0, label: None, error: Some("nothing under the prompt".into()) };
    }
    SegmentResponse { mask: Some(mask.to_rle()), score: 0.8, label: Some(1), error: None }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let addr = listener.local_addr()?;
    std::thread::spawn(move || toy_server(listener));

    let mut config = parse_scenario(
        r#"{"seed": 2, "objects": [{"id": 1, "name": "cube", "shape": {"type": "box", "size": [0.05, 0.05, 0.05]}, "position": [0.55, 0.0, 0.52]}]}"#,
    )?;
    config.segmenter = SegmenterSpec::External { addr: addr.to_string(), timeout_ms: 500 };
    let backend = config.build_segmenter()?;
    let (frame, _) = render_depth(&config.build_scene()?)?;
    for prompt in [Prompt::Point { u: 160, v: 110 }, Prompt::Text { text: "cube".into() }] {
        match segment(backend.as_ref(), &frame, &prompt) {
            Ok(m) => println!("{prompt:?}: {} px centred at {:?}", m.count(), m.centroid()),
            Err(e) => println!("{prompt:?}: {e}"),
        }
    }
    Ok(())
}

//! Start the session service on a free port and drive one grasp as a
//! client would: prompt, inspect the overlay, confirm, watch to the end.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};

use mograsp::codec::decode_png_base64;
use mograsp::orchestrator::{load_scenario, serve, ServerMessage, ServiceOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = load_scenario(concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/demo.json").as_ref())?;
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let addr = listener.local_addr()?;
    std::thread::spawn(move || serve(listener, config, ServiceOptions { realtime: false, ..ServiceOptions::default() }));

    let mut stream = TcpStream::connect(addr)?;
    let reader = BufReader::new(stream.try_clone()?);
    writeln!(stream, r#"{{"type":"prompt","kind":"text","text":"plate"}}"#)?;
    let (mut frames, mut telemetry) = (0, 0);
    for line in reader.lines() {
        match serde_json::from_str::<ServerMessage>(&line?)? {
            ServerMessage::Frame { png_b64, t } => {
                let (w, h, _) = decode_png_base64(&png_b64)?;
                if frames == 0 {
                    println!("first frame {w}x{h} at t = {t:.2} s");
                }
                frames += 1;
            }
            ServerMessage::Segmentation { mask_rle, score, label } => {
                println!("overlay for {label:?}: {}x{} mask, score {score:.2}; confirming", mask_rle.width, mask_rle.height);
                writeln!(stream, r#"{{"type":"confirm"}}"#)?;
            }
            ServerMessage::Telemetry(_) => telemetry += 1,
            ServerMessage::Phase { name } => println!("phase {}", name.name()),
            ServerMessage::Error { code, detail } => println!("error {code:?}: {detail}"),
            ServerMessage::Outcome(o) => {
                println!("outcome {:?}, final error {:?}, {frames} frames, {telemetry} telemetry records", o.status, o.final_error);
                break;
            }
        }
    }
    Ok(())
}

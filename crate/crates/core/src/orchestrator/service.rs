use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, TryRecvError};
use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::codec::png_base64;
use crate::control::OutcomeStatus;
use crate::perception::SegmenterBackend;

use super::config::ScenarioConfig;
use super::protocol::{parse_client_line, ClientMessage, OutcomeRecord, ServerMessage};
use super::runner::{LogRecord, SessionLog};
use super::session::GraspSession;
use super::RunError;

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceOptions {
    /// Pace ticks to the control period; otherwise run as fast as possible
    /// and block in waiting phases until the client speaks.
    pub realtime: bool,
    /// Send a rendered frame every this many ticks.
    pub frame_every: u64,
    /// Client lines handled between two ticks; the rest wait in the queue.
    pub max_messages_per_tick: usize,
    /// Directory for per-connection session logs.
    pub log_dir: Option<PathBuf>,
}

impl Default for ServiceOptions {
    fn default() -> Self {
        Self { realtime: true, frame_every: 5, max_messages_per_tick: 16, log_dir: None }
    }
}

/// Accepts connections forever, one session per connection.
pub fn serve(listener: TcpListener, config: ScenarioConfig, opts: ServiceOptions) -> Result<(), RunError> {
    let config = Arc::new(config);
    let opts = Arc::new(opts);
    let counter = Arc::new(AtomicU64::new(0));
    for stream in listener.incoming() {
        let stream = stream.map_err(|e| RunError::Io(e.to_string()))?;
        let reader = stream.try_clone().map_err(|e| RunError::Io(e.to_string()))?;
        let (config, opts, counter) = (config.clone(), opts.clone(), counter.clone());
        std::thread::spawn(move || {
            let n = counter.fetch_add(1, Ordering::Relaxed);
            match serve_stream(BufReader::new(reader), stream, &config, &opts) {
                Ok((outcome, log)) => {
                    if let Some(dir) = &opts.log_dir {
                        if let Err(e) = log.write_to(&dir.join(format!("session-{n:04}.ndjson"))) {
                            eprintln!("session {n}: {e}");
                        }
                    }
                    eprintln!("session {n}: {:?}", outcome.status);
                }
                Err(e) => eprintln!("session {n}: {e}"),
            }
        });
    }
    Ok(())
}

/// Outbound half of a connection. A failed write marks the peer gone
/// instead of failing the session.
struct Wire<W> {
    writer: W,
    alive: bool,
}

impl<W: Write> Wire<W> {
    fn send(&mut self, messages: &[ServerMessage]) {
        if !self.alive {
            return;
        }
        let mut write = || -> std::io::Result<()> {
            for m in messages {
                let line = serde_json::to_string(m).map_err(std::io::Error::other)?;
                writeln!(self.writer, "{line}")?;
            }
            self.writer.flush()
        };
        if write().is_err() {
            self.alive = false;
        }
    }
}

fn frame_message(session: &GraspSession) -> Result<ServerMessage, RunError> {
    let frame = session.frame().map_err(|e| RunError::Internal(e.to_string()))?;
    let png = png_base64(frame.intrinsics.width, frame.intrinsics.height, &frame.color).map_err(|e| RunError::Internal(e.to_string()))?;
    Ok(ServerMessage::Frame { png_b64: png, t: frame.timestamp })
}

/// Runs one session over a line-oriented stream pair until it finishes or
/// the client disconnects, which counts as an abort. Returns the outcome
/// and the session log.
pub fn serve_stream<R, W>(reader: R, writer: W, config: &ScenarioConfig, opts: &ServiceOptions) -> Result<(OutcomeRecord, SessionLog), RunError>
where
    R: BufRead + Send + 'static,
    W: Write,
{
    let backend: Box<dyn SegmenterBackend> = config.build_segmenter()?;
    let mut session = GraspSession::new(config)?;
    let mut log = SessionLog::new(config);
    let mut wire = Wire { writer, alive: true };
    let (tx, rx) = mpsc::channel::<String>();
    std::thread::spawn(move || {
        for line in reader.lines() {
            let Ok(line) = line else { break };
            if tx.send(line).is_err() {
                break;
            }
        }
    });

    wire.send(&[ServerMessage::Phase { name: session.phase }, frame_message(&session)?]);
    let period = Duration::from_secs_f64(session.params.dt());
    let mut deadline = Instant::now() + period;
    let mut disconnected = false;

    while !session.is_done() {
        let mut lines = Vec::new();
        if session.is_waiting() && !opts.realtime {
            match rx.recv() {
                Ok(l) => lines.push(l),
                Err(_) => disconnected = true,
            }
        }
        while lines.len() < opts.max_messages_per_tick && !disconnected {
            match rx.try_recv() {
                Ok(l) => lines.push(l),
                Err(TryRecvError::Empty) => break,
                Err(TryRecvError::Disconnected) => disconnected = true,
            }
        }

        for line in lines.iter().filter(|l| !l.trim().is_empty()) {
            let tick = session.scene.tick;
            match parse_client_line(line) {
                Ok(message) => log.push(&LogRecord::Client { tick, message }),
                Err(_) => log.push(&LogRecord::ClientMalformed { tick, line: line.clone() }),
            }
            let (next, out) = session.handle_line(line, backend.as_ref());
            session = next;
            log.server(tick, &out);
            wire.send(&out);
            if !opts.realtime && session.is_waiting() && !out.is_empty() {
                wire.send(&[frame_message(&session)?]);
            }
            if session.is_done() {
                break;
            }
        }
        if session.is_done() {
            break;
        }
        if disconnected || !wire.alive {
            let tick = session.scene.tick;
            let abort = ClientMessage::abort();
            log.push(&LogRecord::Client { tick, message: abort.clone() });
            let (next, out) = session.handle_message(&abort, backend.as_ref());
            log.server(tick, &out);
            session = next;
            if !session.is_done() {
                let (next, out) = session.terminate(OutcomeStatus::AbortedByUser, "client disconnected");
                log.server(tick, &out);
                session = next;
            }
            break;
        }
        if session.is_waiting() && !opts.realtime {
            continue;
        }

        let (next, out) = session.tick(backend.as_ref());
        session = next;
        log.server(session.scene.tick, &out);
        wire.send(&out);
        if opts.frame_every > 0 && session.scene.tick % opts.frame_every == 0 {
            wire.send(&[frame_message(&session)?]);
        }
        if opts.realtime {
            let now = Instant::now();
            if deadline > now {
                std::thread::sleep(deadline - now);
            }
            deadline = deadline.max(now) + period;
        }
    }
    let outcome = session.outcome.clone().ok_or_else(|| RunError::Internal("session ended without an outcome".into()))?;
    Ok((outcome, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orchestrator::config::parse_scenario;
    use crate::orchestrator::runner::replay;
    use std::io::Cursor;

    const SCENARIO: &str = r#"{
        "seed": 3,
        "objects": [{"id": 1, "name": "plate", "shape": {"type": "box", "size": [0.002, 0.04, 0.05]}, "position": [0.52, 0.03, 0.51]}]
    }"#;

    fn fast() -> ServiceOptions {
        ServiceOptions { realtime: false, ..ServiceOptions::default() }
    }

    #[test]
    fn tcp_client_session_succeeds_and_replays() {
        let config = parse_scenario(SCENARIO).unwrap();
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let client = std::thread::spawn(move || {
            let mut s = std::net::TcpStream::connect(addr).unwrap();
            s.write_all(b"{\"type\":\"prompt\",\"kind\":\"text\",\"text\":\"plate\"}\nnot json\n{\"type\":\"confirm\"}\n").unwrap();
            let mut seen = Vec::new();
            for line in BufReader::new(s.try_clone().unwrap()).lines() {
                let m: ServerMessage = serde_json::from_str(&line.unwrap()).unwrap();
                let done = matches!(m, ServerMessage::Outcome(_));
                seen.push(m);
                if done {
                    break;
                }
            }
            seen
        });
        let (stream, _) = listener.accept().unwrap();
        let reader = BufReader::new(stream.try_clone().unwrap());
        let (outcome, log) = serve_stream(reader, stream, &config, &fast()).unwrap();
        let msgs = client.join().unwrap();
        assert_eq!(outcome.status, OutcomeStatus::Success, "{outcome:?}");
        assert!(msgs.iter().any(|m| matches!(m, ServerMessage::Frame { .. })));
        assert!(msgs.iter().any(|m| matches!(m, ServerMessage::Error { .. })));
        assert!(msgs.iter().any(|m| matches!(m, ServerMessage::Segmentation { .. })));
        let again = replay(&log.to_ndjson()).unwrap();
        assert_eq!(again.log, log);
    }

    #[test]
    fn disconnect_aborts() {
        let config = parse_scenario(SCENARIO).unwrap();
        let mut out = Vec::new();
        let (outcome, _) = serve_stream(Cursor::new(String::new()), &mut out, &config, &fast()).unwrap();
        assert_eq!(outcome.status, OutcomeStatus::AbortedByUser);
    }
}

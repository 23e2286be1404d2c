//! Out-of-process segmentation adapter.
//!
//! One request per connection: the client writes a JSON line
//! `{frame_id, width, height, color, prompt}` (color is a base64 PNG) and
//! reads back one JSON line `{mask, score}` with `mask` in row RLE form, or
//! `{error}` when nothing was found under the prompt.

use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpStream};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::codec;

use super::{DepthFrame, MaskRle, PerceptionError, Prompt, SegmentMask, SegmenterBackend};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRequest {
    pub frame_id: u64,
    pub width: u32,
    pub height: u32,
    pub color: String,
    pub prompt: Prompt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentResponse {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<MaskRle>,
    #[serde(default)]
    pub score: f32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ExternalSegmenter {
    pub addr: SocketAddr,
    /// Bound on connect, send and receive; default 500 ms.
    pub timeout: Duration,
}

impl ExternalSegmenter {
    pub fn new(addr: SocketAddr) -> Self {
        Self { addr, timeout: Duration::from_millis(500) }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    fn round_trip(&self, req: &SegmentRequest) -> Result<SegmentResponse, PerceptionError> {
        let unavailable = |e: std::io::Error| PerceptionError::BackendUnavailable(format!("{}: {e}", self.addr));
        let stream = TcpStream::connect_timeout(&self.addr, self.timeout).map_err(unavailable)?;
        stream.set_read_timeout(Some(self.timeout)).map_err(unavailable)?;
        stream.set_write_timeout(Some(self.timeout)).map_err(unavailable)?;
        let mut line = serde_json::to_string(req).expect("request serializes");
        line.push('\n');
        (&stream).write_all(line.as_bytes()).map_err(unavailable)?;
        let mut reply = String::new();
        BufReader::new(&stream).read_line(&mut reply).map_err(unavailable)?;
        if reply.is_empty() {
            return Err(PerceptionError::BackendUnavailable("connection closed without a reply".into()));
        }
        serde_json::from_str(&reply).map_err(|e| PerceptionError::BackendUnavailable(format!("bad reply: {e}")))
    }
}

impl SegmenterBackend for ExternalSegmenter {
    fn segment(&self, frame: &DepthFrame, prompt: &Prompt) -> Result<SegmentMask, PerceptionError> {
        let color = codec::png_base64(frame.width(), frame.height(), &frame.color)
            .map_err(|e| PerceptionError::BackendUnavailable(e.to_string()))?;
        let req = SegmentRequest {
            frame_id: frame.frame_id,
            width: frame.width(),
            height: frame.height(),
            color,
            prompt: prompt.clone(),
        };
        let resp = self.round_trip(&req)?;
        if resp.error.is_some() {
            return Err(PerceptionError::NoObjectAtPrompt);
        }
        let rle = resp.mask.ok_or_else(|| PerceptionError::BackendUnavailable("reply has neither mask nor error".into()))?;
        let mask = SegmentMask::from_rle(&rle, resp.label.unwrap_or(0), resp.score)?;
        if mask.is_empty() {
            return Err(PerceptionError::NoObjectAtPrompt);
        }
        Ok(mask)
    }
}

#[cfg(test)]
mod tests {
    use std::net::TcpListener;
    use std::thread;

    use super::*;
    use crate::spatial::CameraIntrinsics;

    fn frame() -> DepthFrame {
        let k = CameraIntrinsics::new(10.0, 10.0, 2.0, 1.0, 4, 3).unwrap();
        DepthFrame::uniform(k, 1.0)
    }

    fn serve_once(reply: impl FnOnce(SegmentRequest) -> Option<String> + Send + 'static) -> SocketAddr {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut line = String::new();
            BufReader::new(&stream).read_line(&mut line).unwrap();
            let req: SegmentRequest = serde_json::from_str(&line).unwrap();
            match reply(req) {
                Some(r) => {
                    let _ = (&stream).write_all(format!("{r}\n").as_bytes());
                }
                None => thread::sleep(Duration::from_millis(1500)),
            }
        });
        addr
    }

    #[test]
    fn decodes_mask_reply() {
        let addr = serve_once(|req| {
            assert_eq!((req.width, req.height), (4, 3));
            let (w, h, px) = codec::decode_png_base64(&req.color).unwrap();
            assert_eq!((w, h, px.len()), (4, 3, 12));
            Some(r#"{"mask":{"width":4,"height":3,"rows":[[4],[1,2,1],[4]]},"score":0.9,"label":7}"#.into())
        });
        let m = ExternalSegmenter::new(addr).segment(&frame(), &Prompt::Point { u: 1, v: 1 }).unwrap();
        assert_eq!(m.pixels().collect::<Vec<_>>(), vec![(1, 1), (2, 1)]);
        assert_eq!(m.object_label, 7);
    }

    #[test]
    fn error_reply_is_no_object() {
        let addr = serve_once(|_| Some(r#"{"error":"nothing there"}"#.into()));
        let r = ExternalSegmenter::new(addr).segment(&frame(), &Prompt::Point { u: 0, v: 0 });
        assert_eq!(r, Err(PerceptionError::NoObjectAtPrompt));
    }

    #[test]
    fn silent_server_times_out() {
        let addr = serve_once(|_| None);
        let seg = ExternalSegmenter::new(addr).with_timeout(Duration::from_millis(200));
        let t0 = std::time::Instant::now();
        let r = seg.segment(&frame(), &Prompt::Point { u: 0, v: 0 });
        assert!(matches!(r, Err(PerceptionError::BackendUnavailable(_))));
        assert!(t0.elapsed() < Duration::from_millis(1000));
    }

    #[test]
    fn refused_connection_is_unavailable() {
        let addr = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap();
        let r = ExternalSegmenter::new(addr).segment(&frame(), &Prompt::Point { u: 0, v: 0 });
        assert!(matches!(r, Err(PerceptionError::BackendUnavailable(_))));
    }
}

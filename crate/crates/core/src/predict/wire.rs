//! `rngpred-v1`: length-prefixed JSON over a duplex byte stream.
//!
//! Every message is a 4-byte big-endian length followed by that many bytes
//! of UTF-8 JSON. The client opens with a handshake, then alternates one
//! request and one response at a time. See `docs/protocol.md`.

use std::io::{self, BufReader, BufWriter, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use tracing::{debug, warn};

use crate::geometry::Point2;
use crate::raster::{GridMap, RoiWindow};

use super::{
    Candidate, CandidateRecord, Predictor, PredictorError, PredictorOutput, PredictorQuery,
};

pub const PROTOCOL: &str = "rngpred-v1";
/// Frames larger than this are rejected as corrupt.
pub const MAX_FRAME: usize = 64 << 20;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hello {
    pub proto: String,
    pub n_queries: usize,
    pub roi_size: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    pub proto: String,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: u64,
    /// Agent position; the ROI is centered on this point rounded to a pixel.
    pub center: [f64; 2],
    pub rgb_png: String,
    pub hist_png: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Response {
    pub id: u64,
    #[serde(default)]
    pub candidates: Vec<CandidateRecord>,
    /// One entry per candidate; an empty string means no mask.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub masks_png: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seg_png: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub int_png: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub fn write_frame(w: &mut impl Write, payload: &[u8]) -> io::Result<()> {
    let len = u32::try_from(payload.len())
        .ok()
        .filter(|&l| l as usize <= MAX_FRAME)
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "frame too large"))?;
    w.write_all(&len.to_be_bytes())?;
    w.write_all(payload)?;
    w.flush()
}

/// Reads one frame; `Ok(None)` on a clean end of stream.
pub fn read_frame(r: &mut impl Read) -> io::Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_FRAME {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("frame length {len} exceeds limit"),
        ));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    Ok(Some(buf))
}

pub fn write_message<T: Serialize>(w: &mut impl Write, msg: &T) -> io::Result<()> {
    let bytes = serde_json::to_vec(msg).map_err(io::Error::other)?;
    write_frame(w, &bytes)
}

pub fn encode_png(m: &GridMap) -> String {
    B64.encode(m.to_png_bytes().expect("in-memory PNG encoding"))
}

pub fn decode_png(s: &str) -> Result<GridMap, String> {
    let bytes = B64.decode(s).map_err(|e| format!("base64: {e}"))?;
    GridMap::from_png_bytes(&bytes).map_err(|e| e.to_string())
}

impl Response {
    pub fn from_output(id: u64, out: &PredictorOutput) -> Self {
        let masks: Vec<String> = out
            .candidates
            .iter()
            .map(|c| c.mask.as_ref().map(encode_png).unwrap_or_default())
            .collect();
        let any_mask = masks.iter().any(|m| !m.is_empty());
        Self {
            id,
            candidates: out.candidates.iter().map(CandidateRecord::from).collect(),
            masks_png: any_mask.then_some(masks),
            seg_png: out.segmentation.as_ref().map(encode_png),
            int_png: out.intersections.as_ref().map(encode_png),
            error: None,
        }
    }

    /// Decodes and validates against the negotiated slot count and ROI size.
    pub fn into_output(self, n: usize, roi_size: u32) -> Result<PredictorOutput, PredictorError> {
        if let Some(e) = self.error {
            return Err(PredictorError::Malformed(format!("server error: {e}")));
        }
        let mut candidates: Vec<Candidate> = self
            .candidates
            .iter()
            .map(|c| Candidate::new(c.dx, c.dy, c.p))
            .collect();
        if let Some(masks) = self.masks_png {
            if masks.len() != candidates.len() {
                return Err(PredictorError::Malformed(format!(
                    "{} masks for {} candidates",
                    masks.len(),
                    candidates.len()
                )));
            }
            for (i, (c, m)) in candidates.iter_mut().zip(masks).enumerate() {
                if !m.is_empty() {
                    let map = decode_png(&m)
                        .map_err(|e| PredictorError::Malformed(format!("mask {i}: {e}")))?;
                    c.mask = Some(map);
                }
            }
        }
        let decode_opt = |s: Option<String>, what: &str| {
            s.map(|s| decode_png(&s).map_err(|e| PredictorError::Malformed(format!("{what}: {e}"))))
                .transpose()
        };
        let out = PredictorOutput {
            candidates,
            segmentation: decode_opt(self.seg_png, "seg_png")?,
            intersections: decode_opt(self.int_png, "int_png")?,
        };
        out.validate(n, roi_size)?;
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WireConfig {
    pub n_queries: usize,
    pub roi_size: u32,
    pub timeout: Duration,
}

impl Default for WireConfig {
    fn default() -> Self {
        Self {
            n_queries: super::DEFAULT_QUERIES,
            roi_size: 128,
            timeout: DEFAULT_TIMEOUT,
        }
    }
}

/// Write half of a socket that closes the whole connection when dropped, so
/// the peer sees end of stream even while our reader thread still holds a
/// clone.
struct TcpWriter(TcpStream);

impl Write for TcpWriter {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.0.write(buf)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.0.flush()
    }
}

impl Drop for TcpWriter {
    fn drop(&mut self) {
        let _ = self.0.shutdown(std::net::Shutdown::Both);
    }
}

/// A framed duplex connection with a background reader, so every receive
/// can time out.
pub struct Connection {
    writer: Box<dyn Write + Send>,
    frames: Receiver<io::Result<Vec<u8>>>,
    closed: bool,
}

impl Connection {
    pub fn tcp(stream: TcpStream) -> io::Result<Self> {
        stream.set_nodelay(true)?;
        let reader = stream.try_clone()?;
        Ok(Self::new(reader, TcpWriter(stream)))
    }

    pub fn new(reader: impl Read + Send + 'static, writer: impl Write + Send + 'static) -> Self {
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            let mut reader = BufReader::new(reader);
            loop {
                match read_frame(&mut reader) {
                    Ok(Some(frame)) => {
                        if tx.send(Ok(frame)).is_err() {
                            break;
                        }
                    }
                    Ok(None) => break,
                    Err(e) => {
                        let _ = tx.send(Err(e));
                        break;
                    }
                }
            }
        });
        Self {
            writer: Box::new(BufWriter::new(writer)),
            frames: rx,
            closed: false,
        }
    }

    pub fn send<T: Serialize>(&mut self, msg: &T) -> Result<(), PredictorError> {
        if self.closed {
            return Err(PredictorError::Disconnected);
        }
        write_message(&mut self.writer, msg).map_err(|e| {
            self.closed = true;
            match e.kind() {
                io::ErrorKind::BrokenPipe | io::ErrorKind::ConnectionReset => {
                    PredictorError::Disconnected
                }
                _ => PredictorError::Io(e),
            }
        })
    }

    pub fn recv_raw(&mut self, timeout: Duration) -> Result<Vec<u8>, PredictorError> {
        if self.closed {
            return Err(PredictorError::Disconnected);
        }
        match self.frames.recv_timeout(timeout) {
            Ok(Ok(frame)) => Ok(frame),
            Ok(Err(e)) => {
                self.closed = true;
                Err(PredictorError::Io(e))
            }
            Err(RecvTimeoutError::Timeout) => Err(PredictorError::Timeout(timeout)),
            Err(RecvTimeoutError::Disconnected) => {
                self.closed = true;
                Err(PredictorError::Disconnected)
            }
        }
    }

    pub fn recv<T: for<'de> Deserialize<'de>>(&mut self, timeout: Duration) -> Result<T, PredictorError> {
        let frame = self.recv_raw(timeout)?;
        serde_json::from_slice(&frame).map_err(|e| PredictorError::Malformed(e.to_string()))
    }
}

/// Client for an external predictor process or socket.
pub struct WirePredictor {
    conn: Connection,
    cfg: WireConfig,
    next_id: u64,
    child: Option<Child>,
}

impl WirePredictor {
    /// Starts `program` with piped standard streams and performs the handshake.
    pub fn spawn(program: &str, args: &[String], cfg: WireConfig) -> Result<Self, PredictorError> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child.stdin.take().expect("stdin piped");
        let stdout = child.stdout.take().expect("stdout piped");
        let mut client = Self {
            conn: Connection::new(stdout, stdin),
            cfg,
            next_id: 0,
            child: Some(child),
        };
        client.handshake()?;
        Ok(client)
    }

    pub fn connect(addr: impl ToSocketAddrs, cfg: WireConfig) -> Result<Self, PredictorError> {
        let mut client = Self {
            conn: Connection::tcp(TcpStream::connect(addr)?)?,
            cfg,
            next_id: 0,
            child: None,
        };
        client.handshake()?;
        Ok(client)
    }

    pub fn from_streams(
        reader: impl Read + Send + 'static,
        writer: impl Write + Send + 'static,
        cfg: WireConfig,
    ) -> Result<Self, PredictorError> {
        let mut client = Self {
            conn: Connection::new(reader, writer),
            cfg,
            next_id: 0,
            child: None,
        };
        client.handshake()?;
        Ok(client)
    }

    fn handshake(&mut self) -> Result<(), PredictorError> {
        self.conn.send(&Hello {
            proto: PROTOCOL.into(),
            n_queries: self.cfg.n_queries,
            roi_size: self.cfg.roi_size,
        })?;
        let ack: Ack = self.conn.recv(self.cfg.timeout)?;
        if ack.proto != PROTOCOL {
            return Err(PredictorError::Protocol(format!(
                "server speaks {:?}, expected {PROTOCOL:?}",
                ack.proto
            )));
        }
        if !ack.ok {
            return Err(PredictorError::Protocol(format!(
                "server refused handshake: {}",
                ack.error.unwrap_or_default()
            )));
        }
        Ok(())
    }

    pub fn config(&self) -> &WireConfig {
        &self.cfg
    }

    /// One request/response round trip for the given ROI images.
    pub fn request(
        &mut self,
        center: Point2,
        rgb: &GridMap,
        hist: &GridMap,
    ) -> Result<PredictorOutput, PredictorError> {
        let id = self.next_id;
        self.next_id += 1;
        self.conn.send(&Request {
            id,
            center: [center.x, center.y],
            rgb_png: encode_png(rgb),
            hist_png: encode_png(hist),
        })?;
        loop {
            let resp: Response = self.conn.recv(self.cfg.timeout)?;
            if resp.id < id {
                // Late answer to a request that already timed out.
                debug!(stale = resp.id, expected = id, "discarding stale response");
                continue;
            }
            if resp.id != id {
                return Err(PredictorError::Protocol(format!(
                    "response id {} does not match request {id}",
                    resp.id
                )));
            }
            return resp.into_output(self.cfg.n_queries, self.cfg.roi_size);
        }
    }
}

impl Predictor for WirePredictor {
    fn n_queries(&self) -> usize {
        self.cfg.n_queries
    }

    fn predict(&mut self, query: &PredictorQuery<'_>) -> Result<PredictorOutput, PredictorError> {
        self.request(query.v_t, &query.image_roi(), &query.history_roi())
    }
}

impl Drop for WirePredictor {
    fn drop(&mut self) {
        // Closing our end of stdin asks a well-behaved server to exit.
        self.conn.closed = true;
        self.conn.writer = Box::new(io::sink());
        if let Some(mut child) = self.child.take() {
            for _ in 0..20 {
                if let Ok(Some(_)) = child.try_wait() {
                    return;
                }
                thread::sleep(Duration::from_millis(10));
            }
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

/// A decoded request as seen by a server.
#[derive(Debug, Clone)]
pub struct ServerRequest {
    pub id: u64,
    pub center: Point2,
    pub window: RoiWindow,
    pub rgb: GridMap,
    pub hist: GridMap,
}

/// Serves one connection until the client hangs up. `handler` answers each
/// request; an `Err` is sent back as an error response.
pub fn serve(
    reader: impl Read,
    writer: impl Write,
    mut handler: impl FnMut(&Hello, &ServerRequest) -> Result<PredictorOutput, String>,
) -> io::Result<usize> {
    let mut reader = BufReader::new(reader);
    let mut writer = BufWriter::new(writer);
    let Some(frame) = read_frame(&mut reader)? else {
        return Ok(0);
    };
    let hello: Hello = match serde_json::from_slice::<Hello>(&frame) {
        Ok(h) if h.proto == PROTOCOL && h.roi_size >= 32 && h.roi_size % 2 == 0 => h,
        Ok(h) => {
            let error = if h.proto != PROTOCOL {
                format!("unsupported protocol {:?}", h.proto)
            } else {
                format!("invalid roi_size {}", h.roi_size)
            };
            write_message(
                &mut writer,
                &Ack {
                    proto: PROTOCOL.into(),
                    ok: false,
                    error: Some(error),
                },
            )?;
            return Ok(0);
        }
        Err(e) => {
            write_message(
                &mut writer,
                &Ack {
                    proto: PROTOCOL.into(),
                    ok: false,
                    error: Some(format!("bad handshake: {e}")),
                },
            )?;
            return Ok(0);
        }
    };
    write_message(
        &mut writer,
        &Ack {
            proto: PROTOCOL.into(),
            ok: true,
            error: None,
        },
    )?;
    let mut served = 0;
    while let Some(frame) = read_frame(&mut reader)? {
        let response = match serde_json::from_slice::<Request>(&frame) {
            Ok(req) => answer(&hello, req, &mut handler),
            Err(e) => Response {
                id: u64::MAX,
                error: Some(format!("bad request: {e}")),
                ..Response::default()
            },
        };
        write_message(&mut writer, &response)?;
        served += 1;
    }
    Ok(served)
}

fn answer(
    hello: &Hello,
    req: Request,
    handler: &mut impl FnMut(&Hello, &ServerRequest) -> Result<PredictorOutput, String>,
) -> Response {
    let id = req.id;
    let fail = |error: String| Response {
        id,
        error: Some(error),
        ..Response::default()
    };
    let center = Point2::new(req.center[0], req.center[1]);
    if !center.is_finite() {
        return fail("center is not finite".into());
    }
    let window = match RoiWindow::around(center, hello.roi_size) {
        Ok(w) => w,
        Err(e) => return fail(e.to_string()),
    };
    let (rgb, hist) = match (decode_png(&req.rgb_png), decode_png(&req.hist_png)) {
        (Ok(r), Ok(h)) => (r, h),
        (Err(e), _) => return fail(format!("rgb_png: {e}")),
        (_, Err(e)) => return fail(format!("hist_png: {e}")),
    };
    let sreq = ServerRequest {
        id,
        center,
        window,
        rgb,
        hist,
    };
    match handler(hello, &sreq) {
        Ok(out) => Response::from_output(id, &out),
        Err(e) => {
            warn!(id, error = %e, "handler failed");
            fail(e)
        }
    }
}

/// Outcome of one conformance check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConformanceReport {
    pub checks: Vec<Check>,
}

impl ConformanceReport {
    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.passed)
    }
}

/// Exercises a server through `connect`, which must open a fresh connection
/// on every call.
pub fn check_conformance(
    mut connect: impl FnMut() -> io::Result<Connection>,
    cfg: WireConfig,
    requests: usize,
) -> ConformanceReport {
    let mut checks = Vec::new();
    let mut record = |name: &str, result: Result<String, String>| {
        let (passed, detail) = match result {
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        checks.push(Check {
            name: name.into(),
            passed,
            detail,
        });
        passed
    };

    let mut conn = match connect() {
        Ok(c) => c,
        Err(e) => {
            record("connect", Err(e.to_string()));
            return ConformanceReport { checks };
        }
    };
    let hello = Hello {
        proto: PROTOCOL.into(),
        n_queries: cfg.n_queries,
        roi_size: cfg.roi_size,
    };
    let ack = conn
        .send(&hello)
        .and_then(|_| conn.recv::<Ack>(cfg.timeout))
        .map_err(|e| e.to_string())
        .and_then(|ack| {
            if ack.proto == PROTOCOL && ack.ok {
                Ok("ack received".to_string())
            } else {
                Err(format!("unexpected ack {ack:?}"))
            }
        });
    if !record("handshake", ack) {
        return ConformanceReport { checks };
    }

    let size = cfg.roi_size;
    let mut rgb = GridMap::new(size, size, 3);
    let mut hist = GridMap::mask(size, size);
    for i in 0..size {
        rgb.set(i, size / 2, 128);
        hist.set(i / 2, size / 2, 255);
    }
    let mut all_ok = true;
    let mut mask_detail = "no masks returned".to_string();
    for k in 0..requests as u64 {
        let id = 1000 + k;
        let req = Request {
            id,
            center: [512.0 + 10.0 * k as f64, 512.0],
            rgb_png: encode_png(&rgb),
            hist_png: encode_png(&hist),
        };
        let result = conn
            .send(&req)
            .and_then(|_| conn.recv::<Response>(cfg.timeout))
            .map_err(|e| e.to_string());
        let resp = match result {
            Ok(r) => r,
            Err(e) => {
                all_ok = false;
                record(&format!("request {k}: round trip"), Err(e));
                break;
            }
        };
        let id_ok = record(
            &format!("request {k}: id echoed"),
            if resp.id == id {
                Ok(format!("id {id}"))
            } else {
                Err(format!("sent {id}, got {}", resp.id))
            },
        );
        if let Some(m) = &resp.masks_png {
            mask_detail = format!("{} mask entries", m.len());
        }
        let decoded = resp
            .into_output(cfg.n_queries, cfg.roi_size)
            .map(|o| {
                format!(
                    "{} candidates, {} valid",
                    o.candidates.len(),
                    o.candidates.iter().filter(|c| c.p >= 0.5).count()
                )
            })
            .map_err(|e| e.to_string());
        let schema_ok = record(&format!("request {k}: schema"), decoded);
        all_ok &= id_ok && schema_ok;
    }
    record(
        "sequential requests",
        if all_ok {
            Ok(format!("{requests} round trips, {mask_detail}"))
        } else {
            Err("at least one round trip failed".into())
        },
    );
    drop(conn);

    let refused = connect()
        .map_err(PredictorError::Io)
        .and_then(|mut c| {
            c.send(&Hello {
                proto: "rngpred-v0".into(),
                n_queries: cfg.n_queries,
                roi_size: cfg.roi_size,
            })?;
            c.recv::<Ack>(cfg.timeout)
        });
    record(
        "rejects unknown protocol version",
        match refused {
            Ok(ack) if !ack.ok => Ok("refused with ok=false".into()),
            Ok(ack) => Err(format!("accepted a wrong version: {ack:?}")),
            Err(PredictorError::Disconnected) => Ok("connection closed".into()),
            Err(e) => Err(e.to_string()),
        },
    );
    ConformanceReport { checks }
}

/// Opens a connection to a child process's standard streams.
pub fn spawn_connection(program: &str, args: &[String]) -> io::Result<(Connection, Child)> {
    let mut child = Command::new(program)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::inherit())
        .spawn()?;
    let stdin = child.stdin.take().expect("stdin piped");
    let stdout = child.stdout.take().expect("stdout piped");
    Ok((Connection::new(stdout, stdin), child))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_round_trip() {
        let mut buf = Vec::new();
        write_frame(&mut buf, b"{\"a\":1}").unwrap();
        assert_eq!(&buf[..4], &[0, 0, 0, 7]);
        let mut r = &buf[..];
        assert_eq!(read_frame(&mut r).unwrap().unwrap(), b"{\"a\":1}");
        assert!(read_frame(&mut r).unwrap().is_none());
    }

    #[test]
    fn oversized_length_rejected() {
        let bytes = u32::MAX.to_be_bytes();
        assert!(read_frame(&mut &bytes[..]).is_err());
    }

    #[test]
    fn response_round_trip_with_masks() {
        let mut out = PredictorOutput::empty(3);
        out.candidates[0] = Candidate::new(12.5, -3.0, 0.75);
        let mut m = GridMap::mask(32, 32);
        m.set(4, 4, 255);
        out.candidates[0].mask = Some(m);
        let resp = Response::from_output(9, &out);
        let json = serde_json::to_string(&resp).unwrap();
        let back: Response = serde_json::from_str(&json).unwrap();
        assert_eq!(back.into_output(3, 32).unwrap(), out);
    }

    #[test]
    fn wrong_candidate_count_is_malformed() {
        let resp = Response {
            id: 0,
            candidates: vec![CandidateRecord {
                dx: 0.0,
                dy: 0.0,
                p: 0.2,
            }],
            ..Response::default()
        };
        assert!(matches!(
            resp.into_output(10, 128),
            Err(PredictorError::Malformed(_))
        ));
    }

    #[test]
    fn handshake_field_names() {
        let v = serde_json::to_value(Hello {
            proto: PROTOCOL.into(),
            n_queries: 10,
            roi_size: 128,
        })
        .unwrap();
        assert_eq!(v, serde_json::json!({"proto":"rngpred-v1","n_queries":10,"roi_size":128}));
        let ack = serde_json::to_value(Ack {
            proto: PROTOCOL.into(),
            ok: true,
            error: None,
        })
        .unwrap();
        assert_eq!(ack, serde_json::json!({"proto":"rngpred-v1","ok":true}));
    }
}

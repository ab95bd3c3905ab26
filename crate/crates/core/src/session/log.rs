//! Session persistence: append-only JSON Lines closed by a SHA-256 footer.
//!
//! ```text
//! {"type":"header", ...}
//! {"type":"frame", ...}        any interleaving of frame, ms, control and
//! {"type":"ms", ...}           cadence_gap records
//! {"type":"footer","sha256":"<hex digest of every preceding byte>"}
//! ```

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Config, FramePacket};
use crate::analysis::MsReport;
use crate::{Error, Result};

pub const SESSION_FILE: &str = "session.jsonl";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionHeader {
    pub format: u32,
    pub config: Config,
    pub route_sha256: String,
    /// Wall-clock start, absent for replays so they stay reproducible.
    pub start_unix_ms: Option<u64>,
}

impl SessionHeader {
    pub fn new(config: Config, route_sha256: String, start_unix_ms: Option<u64>) -> Self {
        Self { format: FORMAT_VERSION, config, route_sha256, start_unix_ms }
    }
}

/// Driver input as received, stamped with session time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlRecord {
    pub t: f64,
    pub throttle: f64,
    pub steer: f64,
}

/// A participant went longer than the reporting interval without a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CadenceGap {
    pub participant: String,
    pub from_t: f64,
    pub to_t: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionLog {
    pub header: SessionHeader,
    pub frames: Vec<FramePacket>,
    pub reports: Vec<MsReport>,
    pub controls: Vec<ControlRecord>,
    pub cadence_gaps: Vec<CadenceGap>,
}

impl SessionLog {
    pub fn new(header: SessionHeader) -> Self {
        Self { header, frames: Vec::new(), reports: Vec::new(), controls: Vec::new(), cadence_gaps: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub(crate) enum Record {
    Header(SessionHeader),
    Frame(FramePacket),
    Ms(MsReport),
    Control(ControlRecord),
    CadenceGap(CadenceGap),
    Footer { sha256: String },
}

/// Streams records to `out`, hashing everything written.
pub struct SessionWriter<W: Write> {
    out: W,
    hasher: Sha256,
}

impl<W: Write> SessionWriter<W> {
    pub fn new(out: W, header: &SessionHeader) -> std::io::Result<Self> {
        let mut w = Self { out, hasher: Sha256::new() };
        w.write(&Record::Header(header.clone()))?;
        Ok(w)
    }

    fn write(&mut self, record: &Record) -> std::io::Result<()> {
        let mut line = serde_json::to_vec(record).map_err(std::io::Error::other)?;
        line.push(b'\n');
        self.hasher.update(&line);
        self.out.write_all(&line)
    }

    pub fn frame(&mut self, f: &FramePacket) -> std::io::Result<()> {
        self.write(&Record::Frame(f.clone()))
    }

    pub fn report(&mut self, r: &MsReport) -> std::io::Result<()> {
        self.write(&Record::Ms(r.clone()))
    }

    pub fn control(&mut self, c: &ControlRecord) -> std::io::Result<()> {
        self.write(&Record::Control(*c))
    }

    pub fn cadence_gap(&mut self, g: &CadenceGap) -> std::io::Result<()> {
        self.write(&Record::CadenceGap(g.clone()))
    }

    pub fn flush(&mut self) -> std::io::Result<()> {
        self.out.flush()
    }

    /// Writes the footer and returns the digest with the underlying writer.
    pub fn finish(mut self) -> std::io::Result<(String, W)> {
        let digest = hex::encode(self.hasher.finalize_reset());
        let mut line = serde_json::to_vec(&Record::Footer { sha256: digest.clone() }).map_err(std::io::Error::other)?;
        line.push(b'\n');
        self.out.write_all(&line)?;
        self.out.flush()?;
        Ok((digest, self.out))
    }
}

fn write_all<W: Write>(log: &SessionLog, out: W) -> std::io::Result<(String, W)> {
    let mut w = SessionWriter::new(out, &log.header)?;
    for f in &log.frames {
        w.frame(f)?;
    }
    for r in &log.reports {
        w.report(r)?;
    }
    for c in &log.controls {
        w.control(c)?;
    }
    for g in &log.cadence_gaps {
        w.cadence_gap(g)?;
    }
    w.finish()
}

/// Serialized session and its digest.
pub fn export_to_string(log: &SessionLog) -> (String, String) {
    let (digest, bytes) = write_all(log, Vec::new()).expect("writing to memory cannot fail");
    (String::from_utf8(bytes).expect("json is utf-8"), digest)
}

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest identifying a session's content.
pub fn session_hash(log: &SessionLog) -> String {
    export_to_string(log).1
}

/// Writes `dir/session.jsonl`, creating `dir` if needed. Returns the digest.
pub fn export(log: &SessionLog, dir: &Path) -> Result<String> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(SESSION_FILE);
    let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    let (digest, _) = write_all(log, std::io::BufWriter::new(file)).map_err(|e| Error::io(&path, e))?;
    Ok(digest)
}

/// Reads a session from a directory containing `session.jsonl`, or from the
/// file itself.
pub fn import(path: &Path) -> Result<SessionLog> {
    let file = if path.is_dir() { path.join(SESSION_FILE) } else { path.to_path_buf() };
    let text = std::fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
    import_str(&text)
}

pub fn import_str(text: &str) -> Result<SessionLog> {
    let mut lines = text.split_inclusive('\n');
    let first = lines.next().ok_or_else(|| Error::Integrity("empty session file".into()))?;
    let header = match parse_record(first, 1)? {
        Record::Header(h) => h,
        _ => return Err(Error::Integrity("first line is not a header".into())),
    };
    let mut log = SessionLog::new(header);
    let mut hasher = Sha256::new();
    hasher.update(first.as_bytes());
    let mut footer: Option<(usize, String)> = None;
    for (i, raw) in lines.enumerate() {
        let line_no = i + 2;
        if let Some((at, _)) = footer {
            return Err(Error::Integrity(format!("line {line_no}: content after footer on line {at}")));
        }
        match parse_record(raw, line_no)? {
            Record::Header(_) => return Err(Error::Integrity(format!("line {line_no}: repeated header"))),
            Record::Footer { sha256 } => {
                footer = Some((line_no, sha256));
                continue;
            }
            Record::Frame(f) => {
                let expected = log.frames.last().map_or(0, |p| p.seq + 1);
                if f.seq != expected {
                    return Err(Error::Integrity(format!(
                        "line {line_no}: frame seq gap, expected {expected} but found {}",
                        f.seq
                    )));
                }
                if let Some(prev) = log.frames.last() {
                    if f.t <= prev.t {
                        return Err(Error::Integrity(format!("line {line_no}: frame time {} not after {}", f.t, prev.t)));
                    }
                }
                log.frames.push(f);
            }
            Record::Ms(r) => {
                if log.reports.last().is_some_and(|p| r.t < p.t) {
                    return Err(Error::Integrity(format!("line {line_no}: report out of time order")));
                }
                log.reports.push(r);
            }
            Record::Control(c) => {
                if log.controls.last().is_some_and(|p| c.t < p.t) {
                    return Err(Error::Integrity(format!("line {line_no}: control out of time order")));
                }
                log.controls.push(c);
            }
            Record::CadenceGap(g) => log.cadence_gaps.push(g),
        }
        hasher.update(raw.as_bytes());
    }
    let Some((_, expected)) = footer else {
        return Err(Error::Integrity("missing footer, session was not closed".into()));
    };
    let actual = hex::encode(hasher.finalize());
    if actual != expected {
        return Err(Error::Integrity(format!("digest mismatch: footer says {expected}, content hashes to {actual}")));
    }
    Ok(log)
}

fn parse_record(raw: &str, line: usize) -> Result<Record> {
    serde_json::from_str(raw.trim_end_matches(['\n', '\r'])).map_err(|e| Error::Parse { line, message: e.to_string() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{CameraMode, RoadControlPoint};

    fn frame(seq: u64) -> FramePacket {
        FramePacket {
            seq,
            t: seq as f64 / 30.0,
            scene_speed: 1.0,
            scene_accel: 0.0,
            bend_g: 0.0,
            control_points: vec![RoadControlPoint { y: 0.0, x: 0.0 }],
            prompt_on: false,
            brake_light: false,
            camera_mode: CameraMode::ThirdPerson,
        }
    }

    fn session() -> SessionLog {
        let mut log = SessionLog::new(SessionHeader::new(Config::default(), "abc".into(), Some(5)));
        log.frames = (0..4).map(frame).collect();
        log.reports.push(MsReport {
            t: 0.1,
            lat: None,
            lon: None,
            eye: 1,
            head: 1,
            stomach: 1,
            participant: "p".into(),
        });
        log.controls.push(ControlRecord { t: 0.05, throttle: 1.0, steer: -2.0 });
        log
    }

    #[test]
    fn round_trip() {
        let log = session();
        let (text, _) = export_to_string(&log);
        assert_eq!(import_str(&text).unwrap(), log);
    }

    #[test]
    fn empty_session_is_header_only() {
        let log = SessionLog::new(SessionHeader::new(Config::default(), String::new(), None));
        let (text, _) = export_to_string(&log);
        assert_eq!(text.lines().count(), 2);
        assert_eq!(import_str(&text).unwrap(), log);
    }

    #[test]
    fn seq_gap_detected() {
        let (text, _) = export_to_string(&session());
        let tampered: String = text.split_inclusive('\n').filter(|l| !l.contains("\"seq\":2")).collect();
        match import_str(&tampered) {
            Err(Error::Integrity(msg)) => assert!(msg.contains("expected 2 but found 3"), "{msg}"),
            other => panic!("expected integrity error, got {other:?}"),
        }
    }

    #[test]
    fn edited_value_detected() {
        let (text, _) = export_to_string(&session());
        let tampered = text.replace("\"steer\":-2.0", "\"steer\":-3.0");
        assert!(matches!(import_str(&tampered), Err(Error::Integrity(m)) if m.contains("digest")));
    }

    #[test]
    fn truncated_detected() {
        let (text, _) = export_to_string(&session());
        let cut: String = text.split_inclusive('\n').take(3).collect();
        assert!(matches!(import_str(&cut), Err(Error::Integrity(m)) if m.contains("footer")));
        assert!(matches!(import_str(""), Err(Error::Integrity(_))));
    }

    #[test]
    fn export_to_dir() {
        let dir = tempfile::tempdir().unwrap();
        let log = session();
        let digest = export(&log, dir.path()).unwrap();
        assert_eq!(digest, session_hash(&log));
        assert_eq!(import(dir.path()).unwrap(), log);
        assert!(matches!(import(&dir.path().join("missing")), Err(Error::Io { .. })));
    }
}

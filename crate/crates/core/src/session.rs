//! Append-only `.lablog` session logs and replay verification.
//!
//! A log is UTF-8 JSON lines: one header object, then one record per tick.
//! Floats are written in shortest round-trip form and parsed back bit-exactly.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::mpsc::{sync_channel, SyncSender};
use std::thread::JoinHandle;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::config::{ConfigErrors, LabConfig, ScenarioId};
use crate::device::{DeviceSample, ReplayDevice};
use crate::math::Vec3;
use crate::protocol::SnapshotMessage;
use crate::servo::{
    ControlEvent, LoopControl, Servo, ServoCore, SnapshotClock, TickHook, TickReport, TickResult,
};

pub const LOG_FORMAT: &str = "lablog";
pub const LOG_VERSION: u32 = 1;
/// Records buffered between flushes, at most.
pub const FLUSH_EVERY: u64 = 256;
/// Records the background writer queues before the producer blocks.
pub const WRITER_QUEUE: usize = 4096;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("tick {got} appended where {expected} was expected")]
    Integrity { expected: u64, got: u64 },
    #[error("log format version {found} not supported (expected {LOG_VERSION})")]
    Version { found: u32 },
    #[error("bad header: {0}")]
    Header(String),
    #[error("log truncated at line {line}; last complete tick {}", last_tick_text(.last_complete))]
    Truncated { line: usize, last_complete: Option<u64> },
    #[error("line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error("header config invalid: {0}")]
    Config(#[from] ConfigErrors),
    #[error("log writer stopped")]
    WriterGone,
}

fn last_tick_text(t: &Option<u64>) -> String {
    t.map_or_else(|| "none".to_string(), |t| t.to_string())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionHeader {
    pub format: String,
    pub version: u32,
    pub scenario: ScenarioId,
    pub dt: f64,
    pub devices: usize,
    /// Every config key, enough to rebuild the run.
    pub config: BTreeMap<String, Value>,
    /// Wall-clock start, metadata only.
    pub start_unix_ms: u64,
    /// Counts scenario switches within one service run.
    #[serde(default)]
    pub segment: u32,
}

impl SessionHeader {
    pub fn new(config: &LabConfig) -> Self {
        let start_unix_ms = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_millis() as u64);
        Self {
            format: LOG_FORMAT.to_string(),
            version: LOG_VERSION,
            scenario: config.scenario,
            dt: config.dt(),
            devices: config.scenario.device_count(),
            config: config.entries(),
            start_unix_ms,
            segment: 0,
        }
    }

    pub fn with_segment(mut self, segment: u32) -> Self {
        self.segment = segment;
        self
    }

    pub fn lab_config(&self) -> Result<LabConfig, ConfigErrors> {
        LabConfig::from_entries(&self.config)
    }
}

mod hex_hash {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(hash: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{hash:016x}"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        let text = String::deserialize(d)?;
        if text.len() != 16 {
            return Err(D::Error::custom("hash must be 16 hex digits"));
        }
        u64::from_str_radix(&text, 16).map_err(D::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub tick: u64,
    pub samples: Vec<DeviceSample>,
    /// Commanded (clamped) force per device.
    pub forces: Vec<Vec3>,
    /// State hash after the tick.
    #[serde(with = "hex_hash")]
    pub hash: u64,
    /// Control events applied just before the tick.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub events: Vec<ControlEvent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot: Option<SnapshotMessage>,
}

impl TickRecord {
    pub fn from_tick(result: &TickResult, hash: u64, with_snapshot: bool) -> Self {
        Self {
            tick: result.tick,
            samples: result.samples.clone(),
            forces: result.commands.iter().map(|c| c.force).collect(),
            hash,
            events: result.events.clone(),
            snapshot: with_snapshot.then(|| SnapshotMessage::from(&result.snapshot)),
        }
    }
}

/// Synchronous log writer. Enforces contiguous ticks from 0.
pub struct SessionWriter<W: Write> {
    out: BufWriter<W>,
    next_tick: u64,
    unflushed: u64,
}

impl SessionWriter<File> {
    pub fn create(path: impl AsRef<Path>, header: &SessionHeader) -> Result<Self, SessionError> {
        Self::new(File::create(path)?, header)
    }
}

impl<W: Write> SessionWriter<W> {
    pub fn new(inner: W, header: &SessionHeader) -> Result<Self, SessionError> {
        let mut out = BufWriter::new(inner);
        write_line(&mut out, header)?;
        out.flush()?;
        Ok(Self {
            out,
            next_tick: 0,
            unflushed: 0,
        })
    }

    pub fn next_tick(&self) -> u64 {
        self.next_tick
    }

    pub fn append(&mut self, record: &TickRecord) -> Result<(), SessionError> {
        if record.tick != self.next_tick {
            return Err(SessionError::Integrity {
                expected: self.next_tick,
                got: record.tick,
            });
        }
        write_line(&mut self.out, record)?;
        self.next_tick += 1;
        self.unflushed += 1;
        if self.unflushed >= FLUSH_EVERY {
            self.out.flush()?;
            self.unflushed = 0;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<W, SessionError> {
        self.out.flush()?;
        self.out.into_inner().map_err(|e| SessionError::Io(e.into_error()))
    }
}

fn write_line<W: Write, T: Serialize>(out: &mut W, value: &T) -> Result<(), SessionError> {
    serde_json::to_writer(&mut *out, value).map_err(io::Error::from)?;
    out.write_all(b"\n")?;
    Ok(())
}

/// Log writer on its own thread, fed through a bounded queue so file I/O
/// never runs on the servo thread.
pub struct BackgroundWriter {
    tx: Option<SyncSender<TickRecord>>,
    handle: Option<JoinHandle<Result<u64, SessionError>>>,
}

impl BackgroundWriter {
    pub fn spawn<W: Write + Send + 'static>(writer: SessionWriter<W>) -> Self {
        let (tx, rx) = sync_channel::<TickRecord>(WRITER_QUEUE);
        let handle = std::thread::Builder::new()
            .name("lablog-writer".into())
            .spawn(move || {
                let mut writer = writer;
                let mut written = 0;
                for record in rx {
                    writer.append(&record)?;
                    written += 1;
                }
                writer.finish()?;
                Ok(written)
            })
            .expect("spawn log writer thread");
        Self {
            tx: Some(tx),
            handle: Some(handle),
        }
    }

    pub fn create(path: impl AsRef<Path>, header: &SessionHeader) -> Result<Self, SessionError> {
        Ok(Self::spawn(SessionWriter::create(path, header)?))
    }

    /// Queues a record, blocking only if the writer is a full queue behind.
    pub fn send(&self, record: TickRecord) -> Result<(), SessionError> {
        let tx = self.tx.as_ref().ok_or(SessionError::WriterGone)?;
        tx.send(record).map_err(|_| SessionError::WriterGone)
    }

    /// Drains the queue, closes the file and returns the number of records written.
    pub fn finish(mut self) -> Result<u64, SessionError> {
        self.join()
    }

    fn join(&mut self) -> Result<u64, SessionError> {
        drop(self.tx.take());
        match self.handle.take() {
            Some(h) => h.join().unwrap_or(Err(SessionError::WriterGone)),
            None => Err(SessionError::WriterGone),
        }
    }
}

impl Drop for BackgroundWriter {
    fn drop(&mut self) {
        if self.handle.is_some() {
            let _ = self.join();
        }
    }
}

/// Turns ticks into log records. Snapshots are kept on the decimated ticks.
pub struct Recorder {
    writer: BackgroundWriter,
    clock: SnapshotClock,
    error: Option<SessionError>,
}

impl Recorder {
    pub fn new(writer: BackgroundWriter, config: &LabConfig) -> Self {
        Self {
            writer,
            clock: SnapshotClock::new(config.servo_rate_hz, config.snapshot_rate_hz),
            error: None,
        }
    }

    pub fn create(path: impl AsRef<Path>, config: &LabConfig, segment: u32) -> Result<Self, SessionError> {
        let header = SessionHeader::new(config).with_segment(segment);
        Ok(Self::new(BackgroundWriter::create(path, &header)?, config))
    }

    pub fn record(&mut self, core: &ServoCore, result: &TickResult) -> Result<(), SessionError> {
        let record = TickRecord::from_tick(result, core.state_hash(), self.clock.is_due(result.tick));
        self.writer.send(record)
    }

    pub fn finish(self) -> Result<u64, SessionError> {
        match self.error {
            Some(e) => Err(e),
            None => self.writer.finish(),
        }
    }
}

impl TickHook for Recorder {
    fn after_tick(&mut self, servo: &Servo, result: &TickResult, _report: &TickReport) -> LoopControl {
        match self.record(servo.core(), result) {
            Ok(()) => LoopControl::Continue,
            Err(e) => {
                self.error = Some(e);
                LoopControl::Stop
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SessionLog {
    pub header: SessionHeader,
    pub records: Vec<TickRecord>,
}

impl SessionLog {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, SessionError> {
        read_log(BufReader::new(File::open(path)?))
    }

    /// Recorded samples of one device, in tick order.
    pub fn samples(&self, device: usize) -> impl Iterator<Item = DeviceSample> + '_ {
        self.records.iter().filter_map(move |r| r.samples.get(device).copied())
    }

    pub fn hashes(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.records.iter().map(|r| (r.tick, r.hash))
    }

    /// One replay device per recorded device.
    pub fn replay_devices(&self, config: &LabConfig) -> Vec<ReplayDevice> {
        (0..self.header.devices)
            .map(|i| ReplayDevice::new(config.device_descriptor(i as u8), self.samples(i)))
            .collect()
    }
}

/// Reads a whole log. A final line that is cut short is reported as
/// truncation; a bad line elsewhere is corruption.
pub fn read_log<R: BufRead>(mut input: R) -> Result<SessionLog, SessionError> {
    let mut line = String::new();
    if input.read_line(&mut line)? == 0 {
        return Err(SessionError::Header("empty file".into()));
    }
    let raw: Value = serde_json::from_str(line.trim_end()).map_err(|e| SessionError::Header(e.to_string()))?;
    if raw.get("format").and_then(Value::as_str) != Some(LOG_FORMAT) {
        return Err(SessionError::Header("not a lablog file".into()));
    }
    if let Some(found) = raw.get("version").and_then(Value::as_u64) {
        if found != u64::from(LOG_VERSION) {
            return Err(SessionError::Version { found: found as u32 });
        }
    }
    let header: SessionHeader = serde_json::from_value(raw).map_err(|e| SessionError::Header(e.to_string()))?;

    let mut records: Vec<TickRecord> = Vec::new();
    let mut line_no = 1;
    loop {
        line.clear();
        if input.read_line(&mut line)? == 0 {
            break;
        }
        line_no += 1;
        let last_complete = records.last().map(|r| r.tick);
        let complete = line.ends_with('\n');
        let record: TickRecord = match serde_json::from_str(line.trim_end()) {
            Ok(r) if complete => r,
            Ok(_) => return Err(SessionError::Truncated { line: line_no, last_complete }),
            Err(e) => {
                let mut rest = String::new();
                let at_end = input.read_line(&mut rest)? == 0;
                return Err(if at_end {
                    SessionError::Truncated { line: line_no, last_complete }
                } else {
                    SessionError::Corrupt { line: line_no, message: e.to_string() }
                });
            }
        };
        let expected = last_complete.map_or(0, |t| t + 1);
        if record.tick != expected {
            return Err(SessionError::Integrity { expected, got: record.tick });
        }
        if record.samples.len() != header.devices {
            return Err(SessionError::Corrupt {
                line: line_no,
                message: format!("{} samples for {} devices", record.samples.len(), header.devices),
            });
        }
        records.push(record);
    }
    Ok(SessionLog { header, records })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VerifyReport {
    pub matched: bool,
    pub first_divergence: Option<u64>,
    pub ticks_checked: u64,
}

/// Re-runs the session from its header against the recorded samples and
/// events, comparing state hashes tick by tick.
pub fn verify_replay(log: &SessionLog) -> Result<VerifyReport, SessionError> {
    let config = log.header.lab_config()?;
    let mut core = ServoCore::new(config)?;
    let mut checked = 0;
    for record in &log.records {
        for event in &record.events {
            if core.apply_event(event).is_err() {
                return Ok(VerifyReport {
                    matched: false,
                    first_divergence: Some(record.tick),
                    ticks_checked: checked,
                });
            }
        }
        core.tick(&record.samples);
        checked += 1;
        if core.state_hash() != record.hash {
            return Ok(VerifyReport {
                matched: false,
                first_divergence: Some(record.tick),
                ticks_checked: checked,
            });
        }
    }
    Ok(VerifyReport {
        matched: true,
        first_divergence: None,
        ticks_checked: checked,
    })
}

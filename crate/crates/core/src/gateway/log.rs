//! Append-only decision log: one JSON object per line, UTC timestamps, a
//! `format` field on every record.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Decision;

pub const LOG_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum StorageError {
    #[error("decision log write failed: {0}")]
    Write(String),
    #[error("decision log read failed: {0}")]
    Read(String),
    #[error("corrupt decision log record at line {line}: {reason}")]
    CorruptRecord { line: usize, reason: String },
}

#[derive(Serialize)]
struct LogLineRef<'a> {
    format: u32,
    #[serde(flatten)]
    decision: &'a Decision,
}

#[derive(Deserialize)]
struct LogLine {
    format: u32,
    #[serde(flatten)]
    decision: Decision,
}

/// Serializes one record without the trailing newline.
pub fn encode_record(decision: &Decision) -> String {
    serde_json::to_string(&LogLineRef { format: LOG_FORMAT_VERSION, decision }).expect("decision serializes")
}

pub fn decode_record(line: &str, line_no: usize) -> Result<Decision, StorageError> {
    let parsed: LogLine = serde_json::from_str(line).map_err(|e| StorageError::CorruptRecord {
        line: line_no,
        reason: e.to_string(),
    })?;
    if parsed.format != LOG_FORMAT_VERSION {
        return Err(StorageError::CorruptRecord {
            line: line_no,
            reason: format!("unsupported record format {}", parsed.format),
        });
    }
    Ok(parsed.decision)
}

/// Parses a whole log; blank lines are skipped, anything else must decode.
pub fn read_decision_log(reader: impl BufRead) -> Result<Vec<Decision>, StorageError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| StorageError::Read(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(decode_record(&line, i + 1)?);
    }
    Ok(out)
}

/// Durable sink for decisions. `append` must not return `Ok` before the
/// record is written.
pub trait DecisionLog: Send + Sync {
    fn append(&self, decision: &Decision) -> Result<(), StorageError>;

    fn read_all(&self) -> Result<Vec<Decision>, StorageError>;
}

/// File-backed log. Every append is flushed to the OS; with `sync_each`
/// it is also fsynced.
pub struct JsonlDecisionLog {
    path: PathBuf,
    writer: Mutex<BufWriter<File>>,
    sync_each: bool,
}

impl JsonlDecisionLog {
    pub fn open(path: impl AsRef<Path>, sync_each: bool) -> Result<Self, StorageError> {
        let path = path.as_ref().to_path_buf();
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| StorageError::Write(format!("{}: {e}", path.display())))?;
        Ok(JsonlDecisionLog { path, writer: Mutex::new(BufWriter::new(file)), sync_each })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl DecisionLog for JsonlDecisionLog {
    fn append(&self, decision: &Decision) -> Result<(), StorageError> {
        let mut line = encode_record(decision);
        line.push('\n');
        let mut writer = self.writer.lock();
        let write = |w: &mut BufWriter<File>| -> std::io::Result<()> {
            w.write_all(line.as_bytes())?;
            w.flush()?;
            if self.sync_each {
                w.get_ref().sync_data()?;
            }
            Ok(())
        };
        write(&mut writer).map_err(|e| StorageError::Write(e.to_string()))
    }

    fn read_all(&self) -> Result<Vec<Decision>, StorageError> {
        self.writer.lock().flush().map_err(|e| StorageError::Write(e.to_string()))?;
        let file = File::open(&self.path).map_err(|e| StorageError::Read(e.to_string()))?;
        read_decision_log(BufReader::new(file))
    }
}

/// In-memory log holding the encoded lines; can be told to fail.
#[derive(Default)]
pub struct MemoryDecisionLog {
    lines: Mutex<Vec<String>>,
    failing: AtomicBool,
}

impl MemoryDecisionLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_failing(&self, failing: bool) {
        self.failing.store(failing, Ordering::SeqCst);
    }

    pub fn len(&self) -> usize {
        self.lines.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The log as it would appear on disk.
    pub fn contents(&self) -> String {
        let lines = self.lines.lock();
        let mut out = String::with_capacity(lines.iter().map(|l| l.len() + 1).sum());
        for line in lines.iter() {
            out.push_str(line);
            out.push('\n');
        }
        out
    }
}

impl DecisionLog for MemoryDecisionLog {
    fn append(&self, decision: &Decision) -> Result<(), StorageError> {
        if self.failing.load(Ordering::SeqCst) {
            return Err(StorageError::Write("injected failure".into()));
        }
        self.lines.lock().push(encode_record(decision));
        Ok(())
    }

    fn read_all(&self) -> Result<Vec<Decision>, StorageError> {
        self.lines
            .lock()
            .iter()
            .enumerate()
            .map(|(i, line)| decode_record(line, i + 1))
            .collect()
    }
}

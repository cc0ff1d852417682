//! Append-only decision log, one JSON document per line.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::{AuthDecision, GateError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub seq: u64,
    /// Microseconds since the Unix epoch, strictly increasing within a log.
    pub timestamp_us: u64,
    pub decision: AuthDecision,
}

struct Tail {
    writer: BufWriter<File>,
    next_seq: u64,
    last_ts: u64,
}

pub struct AuditLog {
    path: PathBuf,
    tail: Mutex<Tail>,
}

fn now_us() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_micros() as u64)
}

impl AuditLog {
    /// Opens (or creates) a log, continuing its sequence and clock.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, GateError> {
        let path = path.as_ref().to_path_buf();
        let existing = if path.exists() {
            read_audit(&path, None)?
        } else {
            AuditReadout::default()
        };
        let mut file = OpenOptions::new().create(true).append(true).open(&path)?;
        if existing.truncated {
            // terminate the partial line so new records start clean
            file.write_all(b"\n")?;
        }
        let (next_seq, last_ts) = existing
            .records
            .last()
            .map_or((0, 0), |r| (r.seq + 1, r.timestamp_us));
        Ok(AuditLog {
            path,
            tail: Mutex::new(Tail {
                writer: BufWriter::new(file),
                next_seq,
                last_ts,
            }),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Appends and flushes one record; writers are serialised.
    pub fn append(&self, decision: &AuthDecision) -> Result<AuditRecord, GateError> {
        let mut tail = self.tail.lock().unwrap_or_else(|p| p.into_inner());
        let timestamp_us = now_us().max(tail.last_ts + 1);
        let record = AuditRecord {
            seq: tail.next_seq,
            timestamp_us,
            decision: decision.clone(),
        };
        let line = serde_json::to_string(&record).map_err(|e| GateError::Format(e.to_string()))?;
        tail.writer.write_all(line.as_bytes())?;
        tail.writer.write_all(b"\n")?;
        tail.writer.flush()?;
        tail.next_seq += 1;
        tail.last_ts = timestamp_us;
        Ok(record)
    }

    pub fn flush(&self) -> Result<(), GateError> {
        let mut tail = self.tail.lock().unwrap_or_else(|p| p.into_inner());
        tail.writer.flush()?;
        tail.writer.get_ref().sync_data()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AuditReadout {
    pub records: Vec<AuditRecord>,
    /// Set when reading stopped at a damaged line.
    pub warning: Option<String>,
    /// The log ends in an unterminated line.
    pub truncated: bool,
}

/// Reads records in order; `range` selects by position. Stops at the first
/// damaged line and reports it as a warning.
pub fn read_audit(
    path: impl AsRef<Path>,
    range: Option<Range<usize>>,
) -> Result<AuditReadout, GateError> {
    let text = std::fs::read(path.as_ref())?;
    let mut out = AuditReadout {
        truncated: !text.is_empty() && !text.ends_with(b"\n"),
        ..AuditReadout::default()
    };
    let mut all = Vec::new();
    for (i, line) in text.split(|&b| b == b'\n').enumerate() {
        if line.is_empty() {
            continue;
        }
        match serde_json::from_slice::<AuditRecord>(line) {
            Ok(r) => all.push(r),
            Err(e) => {
                let msg = format!("line {}: {e}; {} intact records kept", i + 1, all.len());
                log::warn!("audit log {}: {msg}", path.as_ref().display());
                out.warning = Some(msg);
                break;
            }
        }
    }
    out.records = match range {
        Some(r) => all
            .into_iter()
            .skip(r.start)
            .take(r.end.saturating_sub(r.start))
            .collect(),
        None => all,
    };
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gatekeeper::Decision;

    fn decision(user: u32) -> AuthDecision {
        AuthDecision {
            user_id: Some(user),
            vote_share: 0.9,
            frames_used: 100,
            window_seconds: 0.1,
            decision: Decision::Grant,
            reason: "granted".into(),
        }
    }

    #[test]
    fn appends_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("audit.log");
        let log = AuditLog::open(&path).unwrap();
        for u in 1..=3 {
            log.append(&decision(u)).unwrap();
        }
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 3);
        let back = read_audit(&path, None).unwrap();
        assert_eq!(back.records.len(), 3);
        assert!(back.warning.is_none());
        let users: Vec<_> = back
            .records
            .iter()
            .map(|r| r.decision.user_id.unwrap())
            .collect();
        assert_eq!(users, vec![1, 2, 3]);
        assert!(back
            .records
            .windows(2)
            .all(|w| w[0].timestamp_us < w[1].timestamp_us));
        let mid = read_audit(&path, Some(1..2)).unwrap();
        assert_eq!(mid.records[0].seq, 1);
    }

    #[test]
    fn empty_log() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("audit.log");
        std::fs::write(&path, "").unwrap();
        assert!(read_audit(&path, None).unwrap().records.is_empty());
    }

    #[test]
    fn partial_trailing_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("audit.log");
        {
            let log = AuditLog::open(&path).unwrap();
            log.append(&decision(1)).unwrap();
            log.append(&decision(2)).unwrap();
        }
        let mut text = std::fs::read_to_string(&path).unwrap();
        let full = text.clone();
        text.push_str(&full.lines().next().unwrap()[..20]);
        std::fs::write(&path, &text).unwrap();

        let back = read_audit(&path, None).unwrap();
        assert_eq!(back.records.len(), 2);
        assert!(back.warning.is_some());
        assert!(back.truncated);

        // reopening continues after the intact prefix
        let log = AuditLog::open(&path).unwrap();
        let r = log.append(&decision(3)).unwrap();
        assert_eq!(r.seq, 2);
    }
}

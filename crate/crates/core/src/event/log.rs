//! Hash-chained, newline-delimited event log.
//!
//! Line 1 is a header naming the format and checksum algorithm. Each later
//! line is one record. A record's hash is the SHA-256 of its canonical JSON
//! (keys sorted, no whitespace) with the `hash` field left out; `prev_hash`
//! links it to the previous record, or to the header for the first one.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const LOG_FORMAT: &str = "dobj-event-log";
pub const LOG_VERSION: u32 = 1;
pub const CHECKSUM: &str = "sha256";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub format: String,
    pub version: u32,
    pub checksum: String,
}

impl Default for LogHeader {
    fn default() -> Self {
        LogHeader { format: LOG_FORMAT.into(), version: LOG_VERSION, checksum: CHECKSUM.into() }
    }
}

impl LogHeader {
    pub fn hash(&self) -> String {
        sha256_hex(canonical(&serde_json::to_value(self).expect("header serializes")).as_bytes())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub seq: u64,
    /// Wall clock, informational only.
    pub ts: String,
    pub actor: String,
    pub kind: String,
    pub payload: serde_json::Value,
    pub prev_hash: String,
    pub hash: String,
}

impl EventRecord {
    pub fn new(seq: u64, actor: &str, kind: &str, payload: serde_json::Value, prev_hash: &str) -> EventRecord {
        let mut rec = EventRecord {
            seq,
            ts: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            actor: actor.to_string(),
            kind: kind.to_string(),
            payload,
            prev_hash: prev_hash.to_string(),
            hash: String::new(),
        };
        rec.hash = rec.compute_hash();
        rec
    }

    pub fn compute_hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("record serializes");
        v.as_object_mut().expect("record is an object").remove("hash");
        sha256_hex(canonical(&v).as_bytes())
    }

    pub fn to_line(&self) -> String {
        canonical(&serde_json::to_value(self).expect("record serializes"))
    }
}

/// Compact JSON with object keys in sorted order.
pub fn canonical(v: &serde_json::Value) -> String {
    // serde_json's default map is ordered by key, so plain serialization is canonical.
    serde_json::to_string(v).expect("json value serializes")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Checks seq numbering and the hash chain of already-parsed records.
pub fn verify_chain(header: &LogHeader, records: &[EventRecord]) -> Result<()> {
    let mut prev = header.hash();
    for (i, rec) in records.iter().enumerate() {
        let expected_seq = i as u64 + 1;
        if rec.seq != expected_seq {
            return Err(Error::CorruptLog { seq: rec.seq, reason: format!("expected seq {expected_seq}") });
        }
        if rec.prev_hash != prev {
            return Err(Error::CorruptLog { seq: rec.seq, reason: "prev_hash does not match".into() });
        }
        if rec.compute_hash() != rec.hash {
            return Err(Error::CorruptLog { seq: rec.seq, reason: "record hash does not match".into() });
        }
        prev = rec.hash.clone();
    }
    Ok(())
}

/// Append handle on a log file.
#[derive(Debug)]
pub struct LogFile {
    path: PathBuf,
    file: File,
}

impl LogFile {
    pub fn create(path: &Path) -> Result<LogFile> {
        let mut file = OpenOptions::new().create_new(true).append(true).open(path)?;
        let header = canonical(&serde_json::to_value(LogHeader::default()).expect("header serializes"));
        writeln!(file, "{header}")?;
        file.sync_data()?;
        Ok(LogFile { path: path.to_path_buf(), file })
    }

    /// Reads and verifies an existing log, returning an append handle.
    pub fn open(path: &Path) -> Result<(LogFile, LogHeader, Vec<EventRecord>)> {
        let (header, records) = read_log(path)?;
        let file = OpenOptions::new().append(true).open(path)?;
        Ok((LogFile { path: path.to_path_buf(), file }, header, records))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Writes a group of records with a single flush.
    pub fn append(&mut self, records: &[EventRecord]) -> Result<()> {
        let mut buf = String::new();
        for r in records {
            buf.push_str(&r.to_line());
            buf.push('\n');
        }
        self.file.write_all(buf.as_bytes())?;
        self.file.sync_data()?;
        Ok(())
    }
}

pub fn read_log(path: &Path) -> Result<(LogHeader, Vec<EventRecord>)> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let header_line = lines.next().ok_or(Error::CorruptLog { seq: 0, reason: "missing header".into() })??;
    let header: LogHeader = serde_json::from_str(&header_line)
        .map_err(|e| Error::CorruptLog { seq: 0, reason: format!("bad header: {e}") })?;
    if header.format != LOG_FORMAT || header.checksum != CHECKSUM {
        return Err(Error::CorruptLog {
            seq: 0,
            reason: format!("unsupported log {} with checksum {}", header.format, header.checksum),
        });
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: EventRecord = serde_json::from_str(&line)
            .map_err(|e| Error::CorruptLog { seq: i as u64 + 1, reason: format!("unreadable record: {e}") })?;
        records.push(rec);
    }
    verify_chain(&header, &records)?;
    Ok((header, records))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(n: u64) -> Vec<EventRecord> {
        let mut prev = LogHeader::default().hash();
        (1..=n)
            .map(|seq| {
                let r = EventRecord::new(seq, "admin", "create", serde_json::json!({ "n": seq }), &prev);
                prev = r.hash.clone();
                r
            })
            .collect()
    }

    #[test]
    fn hash_excludes_itself_and_covers_payload() {
        let r = chain(1).remove(0);
        assert_eq!(r.compute_hash(), r.hash);
        let mut tampered = r.clone();
        tampered.payload = serde_json::json!({ "n": 2 });
        assert_ne!(tampered.compute_hash(), r.hash);
    }

    #[test]
    fn broken_link_is_reported_with_seq() {
        let header = LogHeader::default();
        let mut recs = chain(3);
        assert!(verify_chain(&header, &recs).is_ok());
        recs[1].payload = serde_json::json!("edited");
        assert_eq!(verify_chain(&header, &recs).unwrap_err().code(), crate::ErrorCode::Validation);
        match verify_chain(&header, &recs).unwrap_err() {
            Error::CorruptLog { seq, .. } => assert_eq!(seq, 2),
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.log");
        let mut log = LogFile::create(&path).unwrap();
        let recs = chain(4);
        log.append(&recs[..2]).unwrap();
        log.append(&recs[2..]).unwrap();
        let (_, _, back) = LogFile::open(&path).unwrap();
        assert_eq!(back, recs);
        assert!(LogFile::create(&path).is_err(), "create refuses to clobber");
    }
}

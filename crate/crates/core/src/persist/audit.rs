use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use super::{io_err, PersistError};
use crate::engine::AuditEvent;

/// Appends audit events to a line-delimited log.
#[derive(Debug)]
pub struct AuditLogWriter {
    path: PathBuf,
    file: File,
}

impl AuditLogWriter {
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, PersistError> {
        let path = path.into();
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io_err(&path))?;
        Ok(AuditLogWriter { path, file })
    }

    pub fn append(&mut self, events: &[AuditEvent]) -> Result<(), PersistError> {
        if events.is_empty() {
            return Ok(());
        }
        let mut buf = String::new();
        for e in events {
            buf.push_str(&serde_json::to_string(e).expect("events serialize"));
            buf.push('\n');
        }
        self.file.write_all(buf.as_bytes()).map_err(io_err(&self.path))?;
        self.file.flush().map_err(io_err(&self.path))
    }
}

/// Reads a log and checks that sequence numbers increase within each session.
pub fn read_audit_log(path: &Path) -> Result<Vec<AuditEvent>, PersistError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut last: BTreeMap<String, u64> = BTreeMap::new();
    let mut out = vec![];
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let e: AuditEvent = serde_json::from_str(&line).map_err(|err| PersistError::InvalidRecord {
            line: n + 1,
            message: err.to_string(),
        })?;
        if let Some(&prev) = last.get(&e.session_id) {
            if e.seq <= prev {
                return Err(PersistError::AuditOutOfOrder {
                    line: n + 1,
                    session: e.session_id,
                    seq: e.seq,
                    previous: prev,
                });
            }
        }
        last.insert(e.session_id.clone(), e.seq);
        out.push(e);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{BBox, FixedClock, ImageRef, Session, SessionConfig};
    use crate::fixtures;
    use std::sync::Arc;

    #[test]
    fn log_round_trip_and_ordering() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("audit.log");
        let mut sess = Session::open_with(
            Arc::new(fixtures::music_frozen()),
            SessionConfig::classifier("s", "a", vec![ImageRef::new("i")]),
            Arc::new(FixedClock(5)),
        )
        .unwrap();
        let r = sess.localize("i", BBox::new(0, 0, 1, 1)).unwrap();
        sess.assert_property(&r, "sound_production", "air_vibration".into())
            .unwrap();
        let events = sess.take_events();
        let mut w = AuditLogWriter::open(&path).unwrap();
        w.append(&events[..1]).unwrap();
        w.append(&events[1..]).unwrap();
        assert_eq!(read_audit_log(&path).unwrap(), events);

        w.append(&events[..1]).unwrap();
        assert!(matches!(
            read_audit_log(&path),
            Err(PersistError::AuditOutOfOrder { .. })
        ));
    }
}

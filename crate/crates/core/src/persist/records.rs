use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use super::{io_err, PersistError};
use crate::engine::AnnotationRecord;
use crate::schema::{Schema, VersionStamp};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RecordFilter {
    pub annotator: Option<String>,
    pub schema: Option<VersionStamp>,
    pub image: Option<String>,
}

impl RecordFilter {
    pub fn matches(&self, r: &AnnotationRecord) -> bool {
        self.annotator.as_ref().is_none_or(|a| *a == r.annotator_id)
            && self.schema.as_ref().is_none_or(|s| *s == r.schema_stamp)
            && self.image.as_ref().is_none_or(|i| *i == r.image)
    }
}

/// Replays `resolve` on the record's assertions and checks the stored node,
/// status, label and concept id against the schema.
pub fn verify_record(schema: &Schema, r: &AnnotationRecord) -> bool {
    let Ok(res) = schema.resolve(&r.assertions) else {
        return false;
    };
    if res.terminal != r.resolved_node || res.status != r.status {
        return false;
    }
    let node = schema.node(&res.terminal).expect("terminal exists");
    node.concept_id == Some(r.concept_id) && schema.canonical_label(&node.id).is_ok_and(|l| l == r.label)
}

/// Reads a `.vrec` file without any schema checks.
pub fn read_records(path: &Path) -> Result<Vec<AnnotationRecord>, PersistError> {
    let file = match fs::File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(vec![]),
        Err(e) => return Err(io_err(path)(e)),
    };
    let mut out = vec![];
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let r: AnnotationRecord = serde_json::from_str(&line).map_err(|e| PersistError::InvalidRecord {
            line: n + 1,
            message: e.to_string(),
        })?;
        out.push(r);
    }
    Ok(out)
}

/// Append-only line-delimited record store. Every record must be pinned to
/// one of the store's schemas and replay consistently against it.
#[derive(Debug, Clone)]
pub struct RecordStore {
    path: PathBuf,
    schemas: BTreeMap<VersionStamp, Arc<Schema>>,
}

impl RecordStore {
    pub fn open(path: impl Into<PathBuf>, schemas: impl IntoIterator<Item = Arc<Schema>>) -> Self {
        RecordStore {
            path: path.into(),
            schemas: schemas
                .into_iter()
                .filter_map(|s| Some((s.version_stamp()?.clone(), s)))
                .collect(),
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn check(&self, records: &[AnnotationRecord]) -> Result<(), PersistError> {
        let mut bad = vec![];
        for r in records {
            let schema = self
                .schemas
                .get(&r.schema_stamp)
                .ok_or_else(|| PersistError::UnknownSchemaStamp(r.schema_stamp.to_string()))?;
            if !verify_record(schema, r) {
                bad.push(r.record_id.clone());
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(PersistError::InconsistentRecord { record_ids: bad })
        }
    }

    /// Appends all records or none of them.
    pub fn append(&self, records: &[AnnotationRecord]) -> Result<(), PersistError> {
        self.check(records)?;
        let mut buf = String::new();
        for r in records {
            buf.push_str(&serde_json::to_string(r).expect("records serialize"));
            buf.push('\n');
        }
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(io_err(&self.path))?;
        f.write_all(buf.as_bytes()).map_err(io_err(&self.path))?;
        f.flush().map_err(io_err(&self.path))
    }

    /// Records in insertion order. A missing file is an empty store.
    pub fn load(&self, filter: &RecordFilter) -> Result<Vec<AnnotationRecord>, PersistError> {
        let records = read_records(&self.path)?;
        self.check(&records)?;
        Ok(records.into_iter().filter(|r| filter.matches(r)).collect())
    }
}

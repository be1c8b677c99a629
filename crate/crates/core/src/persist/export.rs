use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::records::verify_record;
use super::{io_err, PersistError};
use crate::engine::AnnotationRecord;
use crate::schema::Schema;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExportFormat {
    #[default]
    Csv,
    Jsonl,
}

impl FromStr for ExportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ExportFormat::Csv),
            "jsonl" => Ok(ExportFormat::Jsonl),
            other => Err(format!("unknown export format `{other}` (expected csv or jsonl)")),
        }
    }
}

/// One manifest line. `node_path` joins the node ids from the root with `/`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub image: String,
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
    pub concept_id: u64,
    pub label: String,
    pub node_path: String,
    pub status: String,
    pub annotator_id: String,
    pub schema_stamp: String,
}

const COLUMNS: [&str; 11] = [
    "image",
    "x",
    "y",
    "w",
    "h",
    "concept_id",
    "label",
    "node_path",
    "status",
    "annotator_id",
    "schema_stamp",
];

/// Renders a manifest. Every record must be pinned to `schema` and replay
/// to its stored node; all failures are reported together. Rows are ordered
/// by image, then box, then annotator and record id.
pub fn export_dataset(
    records: &[AnnotationRecord],
    schema: &Schema,
    format: ExportFormat,
) -> Result<String, PersistError> {
    let stamp = schema
        .version_stamp()
        .ok_or(crate::schema::SchemaError::SchemaNotFrozen)?;
    if let Some(r) = records.iter().find(|r| r.schema_stamp != *stamp) {
        return Err(PersistError::UnknownSchemaStamp(r.schema_stamp.to_string()));
    }
    let bad: Vec<String> = records
        .iter()
        .filter(|r| !verify_record(schema, r))
        .map(|r| r.record_id.clone())
        .collect();
    if !bad.is_empty() {
        return Err(PersistError::InconsistentRecord { record_ids: bad });
    }
    let mut sorted: Vec<&AnnotationRecord> = records.iter().collect();
    sorted.sort_by(|a, b| {
        (&a.image, a.bbox, &a.annotator_id, &a.record_id).cmp(&(&b.image, b.bbox, &b.annotator_id, &b.record_id))
    });
    let rows = sorted.into_iter().map(|r| ManifestRow {
        image: r.image.clone(),
        x: r.bbox.x,
        y: r.bbox.y,
        w: r.bbox.width,
        h: r.bbox.height,
        concept_id: r.concept_id.get(),
        label: r.label.clone(),
        node_path: schema.root_path(&r.resolved_node).unwrap_or_default().join("/"),
        status: r.status.to_string(),
        annotator_id: r.annotator_id.clone(),
        schema_stamp: r.schema_stamp.to_string(),
    });
    match format {
        ExportFormat::Jsonl => Ok(rows
            .map(|row| serde_json::to_string(&row).expect("rows serialize") + "\n")
            .collect()),
        ExportFormat::Csv => {
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(vec![]);
            w.write_record(COLUMNS).expect("in-memory write");
            for row in rows {
                w.serialize(row).expect("in-memory write");
            }
            Ok(String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv of UTF-8 is UTF-8"))
        }
    }
}

pub fn write_manifest(
    path: &Path,
    records: &[AnnotationRecord],
    schema: &Schema,
    format: ExportFormat,
) -> Result<usize, PersistError> {
    let text = export_dataset(records, schema, format)?;
    fs::write(path, text).map_err(io_err(path))?;
    Ok(records.len())
}

//! On-disk formats.
//!
//! | file    | contents                                              |
//! |---------|-------------------------------------------------------|
//! | `.vts`  | schema source                                         |
//! | `.vtsf` | canonical schema text behind a hash-checked header    |
//! | `.vrec` | annotation records, one JSON object per line          |
//! | `.csv`  | export manifest                                       |
//! | audit   | audit events, one JSON object per line                |
//!
//! All files are UTF-8.

mod audit;
mod config;
mod export;
mod images;
mod records;
mod schema_file;

use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::dsl::{LowerError, ParseDiagnostic};
use crate::schema::SchemaError;
use crate::simulation::SimulationError;

pub use audit::{read_audit_log, AuditLogWriter};
pub use config::load_experiment_config;
pub use export::{export_dataset, write_manifest, ExportFormat, ManifestRow};
pub use images::{ImageEntry, ImageIndex};
pub use records::{read_records, verify_record, RecordFilter, RecordStore};
pub use schema_file::{from_vtsf, load_schema, load_schema_source, save_schema, to_vtsf, VTSF_VERSION};

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("corrupt file: {0}")]
    CorruptFile(String),
    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: String, expected: u32 },
    #[error("{} syntax error(s)", .0.len())]
    Parse(Vec<ParseDiagnostic>),
    #[error("{} schema error(s)", .0.len())]
    Lower(Vec<LowerError>),
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error("record pinned to unknown schema stamp {0}")]
    UnknownSchemaStamp(String),
    #[error("line {line}: {message}")]
    InvalidRecord { line: usize, message: String },
    #[error("records disagree with the schema on replay: {}", .record_ids.join(", "))]
    InconsistentRecord { record_ids: Vec<String> },
    #[error("audit log line {line}: sequence {seq} does not follow {previous} in session `{session}`")]
    AuditOutOfOrder {
        line: usize,
        session: String,
        seq: u64,
        previous: u64,
    },
    #[error("image {}: {message}", path.display())]
    Image { path: PathBuf, message: String },
    #[error(transparent)]
    Config(#[from] SimulationError),
}

impl PersistError {
    pub fn code(&self) -> &'static str {
        match self {
            PersistError::Io { .. } => "Io",
            PersistError::CorruptFile(_) => "CorruptFile",
            PersistError::VersionMismatch { .. } => "VersionMismatch",
            PersistError::Parse(_) => "ParseError",
            PersistError::Lower(_) => "SchemaError",
            PersistError::Schema(_) => "SchemaError",
            PersistError::UnknownSchemaStamp(_) => "UnknownSchemaStamp",
            PersistError::InvalidRecord { .. } => "InvalidRecord",
            PersistError::InconsistentRecord { .. } => "InconsistentRecord",
            PersistError::AuditOutOfOrder { .. } => "AuditOutOfOrder",
            PersistError::Image { .. } => "ImageError",
            PersistError::Config(_) => "InvalidConfig",
        }
    }

    /// Whether the error came from the file system rather than content.
    pub fn is_io(&self) -> bool {
        matches!(self, PersistError::Io { .. } | PersistError::Image { .. })
    }
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(io::Error) -> PersistError + '_ {
    move |source| PersistError::Io {
        path: path.to_path_buf(),
        source,
    }
}

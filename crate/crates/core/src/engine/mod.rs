//! Annotation sessions.
//!
//! A [`Session`] can only be opened on a frozen schema, so the vocabulary is
//! fixed before anyone localizes an object. Within a session a classifier
//! localizes regions, asserts visual properties, watches the live resolution
//! and finalizes a region into an [`AnnotationRecord`]. The record's label and
//! concept id are copied from the schema; no operation takes a label.

mod memory;
mod session;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::{ConceptId, NodeId, PropertyAssertionSet, ResolutionStatus, SchemaError, Value, VersionStamp};

pub use memory::{ConceptEntry, ConceptMemory, Observation, DEFAULT_SIMILARITY_THRESHOLD};
pub use session::{Clock, FixedClock, RegionState, RegionStatus, Role, Session, SessionConfig, SystemClock};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("schema is not frozen")]
    SchemaNotFrozen,
    #[error("image `{0}` is not in the session queue")]
    UnknownImage(String),
    #[error("invalid bounding box: {0}")]
    InvalidBBox(String),
    #[error("unknown region `{0}`")]
    UnknownRegion(String),
    #[error("region `{0}` is finalized")]
    RegionFinalized(String),
    #[error("unknown property `{0}`")]
    UnknownProperty(String),
    #[error("value `{value}` is outside the domain of `{property}`")]
    ValueOutOfDomain { property: String, value: Value },
    #[error("property `{0}` is not asserted")]
    NotAsserted(String),
    #[error("region `{region}` resolves only to `{node}`; partial records must be accepted explicitly")]
    PartialNotAccepted { region: String, node: NodeId },
    #[error("role {0:?} may not perform this operation")]
    RoleNotPermitted(Role),
    #[error("observation has no assertions")]
    EmptyAssertions,
    #[error("schema error: {0}")]
    Schema(SchemaError),
}

impl From<SchemaError> for EngineError {
    fn from(e: SchemaError) -> Self {
        match e {
            SchemaError::SchemaNotFrozen => EngineError::SchemaNotFrozen,
            SchemaError::UnknownProperty(p) => EngineError::UnknownProperty(p),
            SchemaError::ValueOutOfDomain { property, value } => EngineError::ValueOutOfDomain { property, value },
            other => EngineError::Schema(other),
        }
    }
}

impl EngineError {
    /// Stable error name used on the wire.
    pub fn code(&self) -> &'static str {
        match self {
            EngineError::SchemaNotFrozen => "SchemaNotFrozen",
            EngineError::UnknownImage(_) => "UnknownImage",
            EngineError::InvalidBBox(_) => "InvalidBBox",
            EngineError::UnknownRegion(_) => "UnknownRegion",
            EngineError::RegionFinalized(_) => "RegionFinalized",
            EngineError::UnknownProperty(_) => "UnknownProperty",
            EngineError::ValueOutOfDomain { .. } => "ValueOutOfDomain",
            EngineError::NotAsserted(_) => "NotAsserted",
            EngineError::PartialNotAccepted { .. } => "PartialNotAccepted",
            EngineError::RoleNotPermitted(_) => "RoleNotPermitted",
            EngineError::EmptyAssertions => "EmptyAssertions",
            EngineError::Schema(_) => "SchemaError",
        }
    }
}

/// An image in a session queue. Dimensions, when known, bound the boxes
/// drawn on it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRef {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<u32>,
}

impl ImageRef {
    pub fn new(id: impl Into<String>) -> Self {
        ImageRef {
            id: id.into(),
            width: None,
            height: None,
        }
    }

    pub fn with_size(id: impl Into<String>, width: u32, height: u32) -> Self {
        ImageRef {
            id: id.into(),
            width: Some(width),
            height: Some(height),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BBox {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

impl BBox {
    pub fn new(x: u32, y: u32, width: u32, height: u32) -> Self {
        BBox { x, y, width, height }
    }

    pub fn area(&self) -> u64 {
        self.width as u64 * self.height as u64
    }

    /// Intersection over union; 0 for disjoint boxes.
    pub fn iou(&self, other: &BBox) -> f64 {
        let x0 = self.x.max(other.x) as u64;
        let y0 = self.y.max(other.y) as u64;
        let x1 = (self.x as u64 + self.width as u64).min(other.x as u64 + other.width as u64);
        let y1 = (self.y as u64 + self.height as u64).min(other.y as u64 + other.height as u64);
        let inter = x1.saturating_sub(x0) * y1.saturating_sub(y0);
        let union = self.area() + other.area() - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }

    pub(crate) fn check(&self, image: &ImageRef) -> Result<(), EngineError> {
        if self.width == 0 || self.height == 0 {
            return Err(EngineError::InvalidBBox(format!(
                "{}x{} box has no area",
                self.width, self.height
            )));
        }
        if let (Some(w), Some(h)) = (image.width, image.height) {
            if self.x as u64 + self.width as u64 > w as u64 || self.y as u64 + self.height as u64 > h as u64 {
                return Err(EngineError::InvalidBBox(format!(
                    "box ({},{},{},{}) exceeds {}x{} image `{}`",
                    self.x, self.y, self.width, self.height, w, h, image.id
                )));
            }
        }
        Ok(())
    }
}

/// A localized object classified against a frozen schema.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub record_id: String,
    pub session_id: String,
    pub image: String,
    pub bbox: BBox,
    pub assertions: PropertyAssertionSet,
    pub resolved_node: NodeId,
    pub status: ResolutionStatus,
    pub label: String,
    pub concept_id: ConceptId,
    pub schema_stamp: VersionStamp,
    pub annotator_id: String,
    pub timestamp_ms: u64,
}

/// One state change made through a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEvent {
    pub seq: u64,
    pub timestamp_ms: u64,
    pub session_id: String,
    pub operation: String,
    pub payload: serde_json::Value,
    pub schema_stamp: VersionStamp,
}

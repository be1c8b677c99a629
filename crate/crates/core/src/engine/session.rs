use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{AnnotationRecord, AuditEvent, BBox, EngineError, ImageRef};
use crate::schema::{PropertyAssertionSet, ResolutionResult, ResolutionStatus, Schema, Value, VersionStamp};

pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    }
}

/// Always reports the same instant.
#[derive(Debug, Default, Clone, Copy)]
pub struct FixedClock(pub u64);

impl Clock for FixedClock {
    fn now_ms(&self) -> u64 {
        self.0
    }
}

/// Who is working. Classificationists author schemas; only classifiers
/// localize and classify.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Classifier,
    Classificationist,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionStatus {
    /// Evidence does not yet reach a leaf.
    Open,
    /// Evidence resolves to a leaf; still editable.
    Classified,
    Finalized,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RegionState {
    pub region_id: String,
    pub image: String,
    pub bbox: BBox,
    pub assertions: PropertyAssertionSet,
    pub resolution: ResolutionResult,
    pub status: RegionStatus,
}

pub struct SessionConfig {
    pub session_id: String,
    pub annotator_id: String,
    pub role: Role,
    pub images: Vec<ImageRef>,
}

impl SessionConfig {
    pub fn classifier(session_id: impl Into<String>, annotator_id: impl Into<String>, images: Vec<ImageRef>) -> Self {
        SessionConfig {
            session_id: session_id.into(),
            annotator_id: annotator_id.into(),
            role: Role::Classifier,
            images,
        }
    }
}

pub struct Session {
    id: String,
    schema: Arc<Schema>,
    stamp: VersionStamp,
    annotator_id: String,
    role: Role,
    queue: Vec<String>,
    images: BTreeMap<String, ImageRef>,
    regions: BTreeMap<String, RegionState>,
    next_region: u64,
    next_seq: u64,
    events: Vec<AuditEvent>,
    clock: Arc<dyn Clock>,
}

impl fmt::Debug for Session {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Session")
            .field("id", &self.id)
            .field("stamp", &self.stamp)
            .field("annotator_id", &self.annotator_id)
            .field("role", &self.role)
            .field("queue", &self.queue)
            .field("regions", &self.regions)
            .finish()
    }
}

impl Session {
    /// Opens a classifier session on the system clock.
    pub fn open(
        schema: Arc<Schema>,
        session_id: impl Into<String>,
        annotator_id: impl Into<String>,
        images: Vec<ImageRef>,
    ) -> Result<Session, EngineError> {
        Self::open_with(
            schema,
            SessionConfig::classifier(session_id, annotator_id, images),
            Arc::new(SystemClock),
        )
    }

    /// Opens a session. The schema must already be frozen: the vocabulary is
    /// settled before any object is localized.
    pub fn open_with(
        schema: Arc<Schema>,
        config: SessionConfig,
        clock: Arc<dyn Clock>,
    ) -> Result<Session, EngineError> {
        let stamp = schema.version_stamp().cloned().ok_or(EngineError::SchemaNotFrozen)?;
        let mut queue = vec![];
        let mut images = BTreeMap::new();
        for img in config.images {
            if !images.contains_key(&img.id) {
                queue.push(img.id.clone());
                images.insert(img.id.clone(), img);
            }
        }
        let mut session = Session {
            id: config.session_id,
            schema,
            stamp,
            annotator_id: config.annotator_id,
            role: config.role,
            queue,
            images,
            regions: BTreeMap::new(),
            next_region: 1,
            next_seq: 1,
            events: vec![],
            clock,
        };
        let payload = json!({
            "annotator_id": session.annotator_id,
            "role": session.role,
            "images": session.queue,
        });
        session.emit("open_session", payload);
        Ok(session)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    pub fn schema_stamp(&self) -> &VersionStamp {
        &self.stamp
    }

    pub fn annotator_id(&self) -> &str {
        &self.annotator_id
    }

    pub fn role(&self) -> Role {
        self.role
    }

    /// Image ids in queue order.
    pub fn queue(&self) -> &[String] {
        &self.queue
    }

    pub fn region(&self, id: &str) -> Option<&RegionState> {
        self.regions.get(id)
    }

    pub fn regions(&self) -> impl Iterator<Item = &RegionState> {
        self.regions.values()
    }

    /// Audit events not yet taken.
    pub fn pending_events(&self) -> &[AuditEvent] {
        &self.events
    }

    pub fn take_events(&mut self) -> Vec<AuditEvent> {
        std::mem::take(&mut self.events)
    }

    fn emit(&mut self, operation: &str, payload: serde_json::Value) {
        let event = AuditEvent {
            seq: self.next_seq,
            timestamp_ms: self.clock.now_ms(),
            session_id: self.id.clone(),
            operation: operation.to_string(),
            payload,
            schema_stamp: self.stamp.clone(),
        };
        self.next_seq += 1;
        self.events.push(event);
    }

    fn require_classifier(&self) -> Result<(), EngineError> {
        match self.role {
            Role::Classifier => Ok(()),
            r => Err(EngineError::RoleNotPermitted(r)),
        }
    }

    fn open_region(&mut self, region_id: &str) -> Result<&mut RegionState, EngineError> {
        let region = self
            .regions
            .get_mut(region_id)
            .ok_or_else(|| EngineError::UnknownRegion(region_id.to_string()))?;
        if region.status == RegionStatus::Finalized {
            return Err(EngineError::RegionFinalized(region_id.to_string()));
        }
        Ok(region)
    }

    fn status_of(resolution: &ResolutionResult) -> RegionStatus {
        match resolution.status {
            ResolutionStatus::Leaf => RegionStatus::Classified,
            ResolutionStatus::Partial => RegionStatus::Open,
        }
    }

    /// Localizes an object on a queued image.
    pub fn localize(&mut self, image: &str, bbox: BBox) -> Result<String, EngineError> {
        self.require_classifier()?;
        let img = self
            .images
            .get(image)
            .ok_or_else(|| EngineError::UnknownImage(image.to_string()))?;
        bbox.check(img)?;
        let resolution = self.schema.resolve(&PropertyAssertionSet::new())?;
        let region_id = format!("{}.r{}", self.id, self.next_region);
        self.next_region += 1;
        self.regions.insert(
            region_id.clone(),
            RegionState {
                region_id: region_id.clone(),
                image: image.to_string(),
                bbox,
                assertions: PropertyAssertionSet::new(),
                status: Self::status_of(&resolution),
                resolution,
            },
        );
        self.emit(
            "localize",
            json!({ "region_id": region_id, "image": image, "bbox": bbox }),
        );
        Ok(region_id)
    }

    /// Records an observed property value, replacing any earlier one, and
    /// returns the fresh resolution.
    pub fn assert_property(
        &mut self,
        region_id: &str,
        property: &str,
        value: Value,
    ) -> Result<ResolutionResult, EngineError> {
        self.require_classifier()?;
        self.open_region(region_id)?;
        let def = self
            .schema
            .property(property)
            .ok_or_else(|| EngineError::UnknownProperty(property.to_string()))?;
        if !def.domain.contains(&value) {
            return Err(EngineError::ValueOutOfDomain {
                property: property.to_string(),
                value,
            });
        }
        let schema = Arc::clone(&self.schema);
        let region = self.open_region(region_id)?;
        region.assertions.assert(property, value.clone());
        let resolution = schema.resolve(&region.assertions)?;
        region.status = Self::status_of(&resolution);
        region.resolution = resolution.clone();
        self.emit(
            "assert_property",
            json!({ "region_id": region_id, "property": property, "value": value }),
        );
        Ok(resolution)
    }

    pub fn retract_property(&mut self, region_id: &str, property: &str) -> Result<ResolutionResult, EngineError> {
        self.require_classifier()?;
        let schema = Arc::clone(&self.schema);
        let region = self.open_region(region_id)?;
        if region.assertions.retract(property).is_none() {
            return Err(EngineError::NotAsserted(property.to_string()));
        }
        let resolution = schema.resolve(&region.assertions)?;
        region.status = Self::status_of(&resolution);
        region.resolution = resolution.clone();
        self.emit(
            "retract_property",
            json!({ "region_id": region_id, "property": property }),
        );
        Ok(resolution)
    }

    /// Turns the region into a record. The label and concept id come from the
    /// schema's binding for the resolved node.
    pub fn finalize(&mut self, region_id: &str, accept_partial: bool) -> Result<AnnotationRecord, EngineError> {
        self.require_classifier()?;
        self.open_region(region_id)?;
        let region = &self.regions[region_id];
        let res = &region.resolution;
        if res.status == ResolutionStatus::Partial && !accept_partial {
            return Err(EngineError::PartialNotAccepted {
                region: region_id.to_string(),
                node: res.terminal.clone(),
            });
        }
        let node = self
            .schema
            .node(&res.terminal)
            .expect("resolution terminal is a schema node");
        let concept_id = node.concept_id.expect("frozen schemas assign every concept id");
        let label = self.schema.canonical_label(&node.id)?;
        let record = AnnotationRecord {
            record_id: region.region_id.clone(),
            session_id: self.id.clone(),
            image: region.image.clone(),
            bbox: region.bbox,
            assertions: region.assertions.clone(),
            resolved_node: node.id.clone(),
            status: res.status,
            label,
            concept_id,
            schema_stamp: self.stamp.clone(),
            annotator_id: self.annotator_id.clone(),
            timestamp_ms: self.clock.now_ms(),
        };
        if let Some(r) = self.regions.get_mut(region_id) {
            r.status = RegionStatus::Finalized;
        }
        self.emit(
            "finalize",
            json!({
                "region_id": region_id,
                "accept_partial": accept_partial,
                "resolved_node": record.resolved_node,
                "concept_id": record.concept_id,
            }),
        );
        Ok(record)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{self, KOTO_ID};

    fn music() -> Arc<Schema> {
        Arc::new(fixtures::music_frozen())
    }

    fn session() -> Session {
        Session::open_with(
            music(),
            SessionConfig::classifier(
                "s1",
                "ann",
                vec![
                    ImageRef::with_size("a.jpg", 640, 480),
                    ImageRef::new("b.jpg"),
                    ImageRef::new("c.jpg"),
                ],
            ),
            Arc::new(FixedClock(7)),
        )
        .unwrap()
    }

    #[test]
    fn open_requires_frozen_schema() {
        let err = Session::open(Arc::new(fixtures::music_draft()), "s", "a", vec![]).unwrap_err();
        assert_eq!(err, EngineError::SchemaNotFrozen);
        let s = Session::open(music(), "s", "a", vec![]).unwrap();
        assert!(s.queue().is_empty());
        assert_eq!(session().queue().len(), 3);
    }

    #[test]
    fn koto_flow() {
        let mut s = session();
        let r = s.localize("a.jpg", BBox::new(10, 10, 200, 300)).unwrap();
        let res = s
            .assert_property(&r, "sound_production", "string_vibration".into())
            .unwrap();
        assert_eq!(res.terminal, "stringed_instrument");
        assert_eq!(res.status, ResolutionStatus::Partial);
        let res = s.assert_property(&r, "taut_string_count", 13.into()).unwrap();
        assert_eq!(res.terminal, "koto");
        assert_eq!(res.status, ResolutionStatus::Leaf);
        assert_eq!(s.region(&r).unwrap().status, RegionStatus::Classified);
        let rec = s.finalize(&r, false).unwrap();
        assert_eq!(rec.label, "koto");
        assert_eq!(rec.concept_id.get(), KOTO_ID);
        assert_eq!(&rec.schema_stamp, s.schema_stamp());
        assert_eq!(
            s.assert_property(&r, "taut_string_count", 6.into()),
            Err(EngineError::RegionFinalized(r.clone()))
        );
        assert_eq!(s.finalize(&r, true), Err(EngineError::RegionFinalized(r.clone())));
    }

    #[test]
    fn retract_restores_partial() {
        let mut s = session();
        let r = s.localize("b.jpg", BBox::new(0, 0, 5, 5)).unwrap();
        s.assert_property(&r, "sound_production", "string_vibration".into())
            .unwrap();
        let before = s.region(&r).unwrap().clone();
        s.assert_property(&r, "taut_string_count", 13.into()).unwrap();
        let res = s.retract_property(&r, "taut_string_count").unwrap();
        assert_eq!(res.terminal, "stringed_instrument");
        assert_eq!(s.region(&r).unwrap(), &before);
        assert_eq!(
            s.retract_property(&r, "taut_string_count"),
            Err(EngineError::NotAsserted("taut_string_count".into()))
        );
    }

    #[test]
    fn partial_needs_explicit_acceptance() {
        let mut s = session();
        let r = s.localize("b.jpg", BBox::new(0, 0, 5, 5)).unwrap();
        s.assert_property(&r, "sound_production", "string_vibration".into())
            .unwrap();
        assert!(matches!(
            s.finalize(&r, false),
            Err(EngineError::PartialNotAccepted { .. })
        ));
        let rec = s.finalize(&r, true).unwrap();
        assert_eq!(rec.label, "stringed instrument");
        assert_eq!(rec.status, ResolutionStatus::Partial);
    }

    #[test]
    fn localize_errors() {
        let mut s = session();
        assert_eq!(
            s.localize("zzz.jpg", BBox::new(0, 0, 1, 1)),
            Err(EngineError::UnknownImage("zzz.jpg".into()))
        );
        assert!(matches!(
            s.localize("a.jpg", BBox::new(0, 0, 0, 1)),
            Err(EngineError::InvalidBBox(_))
        ));
        assert!(matches!(
            s.localize("a.jpg", BBox::new(600, 0, 100, 1)),
            Err(EngineError::InvalidBBox(_))
        ));
    }

    #[test]
    fn bad_assertions_are_rejected_without_state_change() {
        let mut s = session();
        let r = s.localize("b.jpg", BBox::new(0, 0, 5, 5)).unwrap();
        let events = s.pending_events().len();
        assert_eq!(
            s.assert_property(&r, "colour", "red".into()),
            Err(EngineError::UnknownProperty("colour".into()))
        );
        assert!(matches!(
            s.assert_property(&r, "taut_string_count", "many".into()),
            Err(EngineError::ValueOutOfDomain { .. })
        ));
        assert_eq!(s.pending_events().len(), events);
        assert!(s.region(&r).unwrap().assertions.is_empty());
    }

    #[test]
    fn every_mutation_emits_one_event() {
        let mut s = session();
        let r = s.localize("b.jpg", BBox::new(0, 0, 5, 5)).unwrap();
        s.assert_property(&r, "sound_production", "air_vibration".into())
            .unwrap();
        s.retract_property(&r, "sound_production").unwrap();
        s.assert_property(&r, "sound_production", "air_vibration".into())
            .unwrap();
        s.finalize(&r, false).unwrap();
        let ops: Vec<_> = s.take_events().into_iter().map(|e| (e.seq, e.operation)).collect();
        assert_eq!(
            ops,
            vec![
                (1, "open_session".to_string()),
                (2, "localize".into()),
                (3, "assert_property".into()),
                (4, "retract_property".into()),
                (5, "assert_property".into()),
                (6, "finalize".into()),
            ]
        );
        assert!(s.pending_events().is_empty());
    }

    #[test]
    fn classificationists_do_not_classify() {
        let mut s = Session::open_with(
            music(),
            SessionConfig {
                session_id: "s".into(),
                annotator_id: "expert".into(),
                role: Role::Classificationist,
                images: vec![ImageRef::new("a")],
            },
            Arc::new(FixedClock(0)),
        )
        .unwrap();
        assert_eq!(
            s.localize("a", BBox::new(0, 0, 1, 1)),
            Err(EngineError::RoleNotPermitted(Role::Classificationist))
        );
    }
}

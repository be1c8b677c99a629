//! HTTP API for annotator clients.
//!
//! [`Api::handle`] is a transport-free dispatcher from [`ApiRequest`] to
//! [`ApiResponse`]; [`serve`] puts it behind an HTTP/1.1 listener. JSON
//! responses share one envelope:
//!
//! ```json
//! {"status": "ok", "schema_stamp": "sha256:...", "payload": ...}
//! {"status": "error", "schema_stamp": "sha256:...", "error": {"code": "...", "message": "...", "locus": "..."}}
//! ```
//!
//! Request bodies reject unknown fields, so no request can carry a label.
//! Mutating requests may include a `request_id`; a retried request id gets
//! the original response back without repeating the operation.

mod http;

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex, MutexGuard};

use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value as Json};

use crate::agreement::{self, AgreementError, AgreementReport, MatchPolicy};
use crate::engine::{AuditEvent, BBox, Clock, EngineError, ImageRef, Session, SessionConfig, SystemClock};
use crate::persist::{AuditLogWriter, ImageIndex, PersistError, RecordFilter, RecordStore};
use crate::schema::{Domain, Schema, Value};

pub use http::{router, serve};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Get,
    Post,
    Delete,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiRequest {
    pub method: Method,
    pub path: String,
    pub query: BTreeMap<String, String>,
    pub body: Vec<u8>,
}

impl ApiRequest {
    pub fn get(path: &str) -> Self {
        ApiRequest {
            method: Method::Get,
            path: path.to_string(),
            query: BTreeMap::new(),
            body: vec![],
        }
    }

    pub fn post(path: &str, body: Json) -> Self {
        ApiRequest {
            method: Method::Post,
            path: path.to_string(),
            query: BTreeMap::new(),
            body: body.to_string().into_bytes(),
        }
    }

    pub fn delete(path: &str) -> Self {
        ApiRequest {
            method: Method::Delete,
            ..ApiRequest::get(path)
        }
    }

    pub fn with_query(mut self, key: &str, value: &str) -> Self {
        self.query.insert(key.to_string(), value.to_string());
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Body {
    Json(Json),
    Bytes { content_type: &'static str, data: Vec<u8> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApiResponse {
    pub status: u16,
    pub body: Body,
}

impl ApiResponse {
    /// The JSON envelope, or `Null` for byte responses.
    pub fn json(&self) -> &Json {
        static NULL: Json = Json::Null;
        match &self.body {
            Body::Json(j) => j,
            Body::Bytes { .. } => &NULL,
        }
    }

    pub fn payload(&self) -> &Json {
        &self.json()["payload"]
    }

    pub fn error_code(&self) -> Option<&str> {
        self.json()["error"]["code"].as_str()
    }
}

/// An error on the wire.
#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: u16,
    pub code: String,
    pub message: String,
    pub locus: Option<String>,
}

impl ApiError {
    fn new(status: u16, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code: code.to_string(),
            message: message.into(),
            locus: None,
        }
    }

    fn at(mut self, locus: impl Into<String>) -> Self {
        self.locus = Some(locus.into());
        self
    }

    fn bad_request(message: impl Into<String>) -> Self {
        ApiError::new(400, "BadRequest", message)
    }

    fn not_found(code: &str, id: &str) -> Self {
        ApiError::new(404, code, format!("`{id}` not found")).at(id)
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        let status = match &e {
            EngineError::UnknownImage(_) | EngineError::UnknownRegion(_) => 404,
            EngineError::RegionFinalized(_)
            | EngineError::PartialNotAccepted { .. }
            | EngineError::NotAsserted(_)
            | EngineError::RoleNotPermitted(_)
            | EngineError::SchemaNotFrozen => 409,
            EngineError::UnknownProperty(_)
            | EngineError::ValueOutOfDomain { .. }
            | EngineError::InvalidBBox(_)
            | EngineError::EmptyAssertions
            | EngineError::Schema(_) => 422,
        };
        let locus = match &e {
            EngineError::UnknownImage(id) | EngineError::UnknownRegion(id) | EngineError::RegionFinalized(id) => {
                Some(id.clone())
            }
            EngineError::PartialNotAccepted { region, .. } => Some(region.clone()),
            EngineError::UnknownProperty(p) | EngineError::NotAsserted(p) => Some(p.clone()),
            EngineError::ValueOutOfDomain { property, .. } => Some(property.clone()),
            _ => None,
        };
        ApiError {
            status,
            code: e.code().to_string(),
            message: e.to_string(),
            locus,
        }
    }
}

impl From<AgreementError> for ApiError {
    fn from(e: AgreementError) -> Self {
        let status = match e {
            AgreementError::NoSharedItems(..)
            | AgreementError::TooFewAnnotators(_)
            | AgreementError::NoComparableItems
            | AgreementError::NoEligibleItems
            | AgreementError::UnknownAnnotator(_) => 404,
            _ => 422,
        };
        ApiError::new(status, e.code(), e.to_string())
    }
}

impl From<PersistError> for ApiError {
    fn from(e: PersistError) -> Self {
        let status = match &e {
            PersistError::InconsistentRecord { .. } | PersistError::UnknownSchemaStamp(_) => 409,
            _ => 500,
        };
        ApiError::new(status, e.code(), e.to_string())
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateSession {
    annotator_id: String,
    images: Vec<String>,
    #[serde(default)]
    request_id: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WireBBox {
    x: u32,
    y: u32,
    width: u32,
    height: u32,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateRegion {
    image: String,
    bbox: WireBBox,
    // read before dispatch for replay detection
    #[serde(default, rename = "request_id")]
    _request_id: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AssertBody {
    property: String,
    value: Json,
    // read before dispatch for replay detection
    #[serde(default, rename = "request_id")]
    _request_id: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FinalizeBody {
    #[serde(default)]
    accept_partial: bool,
    // read before dispatch for replay detection
    #[serde(default, rename = "request_id")]
    _request_id: Option<String>,
}

fn parse_body<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    let text = if body.is_empty() { b"{}".as_slice() } else { body };
    serde_json::from_slice(text).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}

/// Turns a JSON value into a property value for `domain`. Strings are
/// parsed, so `"13"` works for integer properties.
fn wire_value(domain: &Domain, v: &Json) -> Result<Value, ApiError> {
    match v {
        Json::Number(n) => n
            .as_i64()
            .map(Value::Int)
            .ok_or_else(|| ApiError::bad_request(format!("`{n}` is not an integer"))),
        Json::String(s) => Value::parse_for(domain, s)
            .ok_or_else(|| ApiError::new(422, "ValueOutOfDomain", format!("`{s}` is not a valid value"))),
        Json::Bool(b) => Ok(Value::symbol(if *b {
            crate::schema::PRESENT
        } else {
            crate::schema::ABSENT
        })),
        other => Err(ApiError::bad_request(format!("`{other}` is not a property value"))),
    }
}

type Replies = BTreeMap<String, (String, ApiResponse)>;

struct SessionEntry {
    session: Session,
    replies: Replies,
}

/// Server state. Sessions are locked one at a time, so requests against
/// different sessions run in parallel and requests against one session are
/// applied in arrival order.
pub struct Api {
    schema: Option<Arc<Schema>>,
    store: Option<Mutex<RecordStore>>,
    images: ImageIndex,
    audit: Option<Mutex<AuditLogWriter>>,
    clock: Arc<dyn Clock>,
    sessions: Mutex<BTreeMap<String, Arc<Mutex<SessionEntry>>>>,
    regions: Mutex<BTreeMap<String, String>>,
    open_replies: Mutex<Replies>,
    next_session: Mutex<u64>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

impl Api {
    pub fn new(schema: Option<Arc<Schema>>) -> Self {
        Api {
            schema,
            store: None,
            images: ImageIndex::default(),
            audit: None,
            clock: Arc::new(SystemClock),
            sessions: Mutex::new(BTreeMap::new()),
            regions: Mutex::new(BTreeMap::new()),
            open_replies: Mutex::new(BTreeMap::new()),
            next_session: Mutex::new(1),
        }
    }

    /// Finalized records are appended here; agreement reports read from it.
    pub fn with_store(mut self, store: RecordStore) -> Self {
        self.store = Some(Mutex::new(store));
        self
    }

    /// Sessions may only use indexed images when the index is non-empty.
    pub fn with_images(mut self, images: ImageIndex) -> Self {
        self.images = images;
        self
    }

    pub fn with_audit_log(mut self, log: AuditLogWriter) -> Self {
        self.audit = Some(Mutex::new(log));
        self
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn schema(&self) -> Option<&Arc<Schema>> {
        self.schema.as_ref()
    }

    fn stamp(&self) -> Json {
        match self.schema.as_ref().and_then(|s| s.version_stamp()) {
            Some(s) => json!(s.as_str()),
            None => Json::Null,
        }
    }

    fn ok(&self, payload: Json) -> ApiResponse {
        ApiResponse {
            status: 200,
            body: Body::Json(json!({ "status": "ok", "schema_stamp": self.stamp(), "payload": payload })),
        }
    }

    fn err(&self, e: ApiError) -> ApiResponse {
        ApiResponse {
            status: e.status,
            body: Body::Json(json!({
                "status": "error",
                "schema_stamp": self.stamp(),
                "error": { "code": e.code, "message": e.message, "locus": e.locus },
            })),
        }
    }

    fn frozen(&self) -> Result<&Arc<Schema>, ApiError> {
        self.schema
            .as_ref()
            .filter(|s| s.is_frozen())
            .ok_or_else(|| ApiError::new(503, "SchemaUnavailable", "no frozen schema is loaded"))
    }

    pub fn handle(&self, req: &ApiRequest) -> ApiResponse {
        let segs: Vec<&str> = req
            .path
            .trim_matches('/')
            .split('/')
            .filter(|s| !s.is_empty())
            .collect();
        let result = match (req.method, segs.as_slice()) {
            (Method::Get, ["schema"]) => self.get_schema(),
            (Method::Post, ["sessions"]) => return self.create_session(&req.body),
            (Method::Post, ["sessions", id, "regions"]) => return self.session_op(req, id, None),
            (Method::Post, ["regions", id, "assertions"]) => return self.region_op(req, id),
            (Method::Delete, ["regions", id, "assertions", _]) => return self.region_op(req, id),
            (Method::Post, ["regions", id, "finalize"]) => return self.region_op(req, id),
            (Method::Get, ["reports", "agreement"]) => self.agreement_report(&req.query),
            (Method::Get, ["images"]) => Ok(self.image_list()),
            (Method::Get, ["images", id]) => return self.image_bytes(id),
            (_, ["schema"])
            | (_, ["sessions"])
            | (_, ["sessions", _, "regions"])
            | (_, ["regions", _, "assertions"])
            | (_, ["regions", _, "assertions", _])
            | (_, ["regions", _, "finalize"])
            | (_, ["reports", "agreement"])
            | (_, ["images"])
            | (_, ["images", _]) => Err(ApiError::new(405, "MethodNotAllowed", "method not allowed")),
            _ => Err(ApiError::new(404, "NotFound", format!("no route for {}", req.path))),
        };
        match result {
            Ok(payload) => self.ok(payload),
            Err(e) => self.err(e),
        }
    }

    fn get_schema(&self) -> Result<Json, ApiError> {
        let s = self.frozen()?;
        let properties: Vec<Json> = s
            .properties()
            .map(|p| {
                let phrases: BTreeMap<String, &String> = p.phrases.iter().map(|(v, ph)| (v.to_string(), ph)).collect();
                json!({ "id": p.id, "domain": p.domain, "phrases": phrases })
            })
            .collect();
        let nodes: Vec<Json> = s
            .preorder()
            .into_iter()
            .map(|n| {
                let b = n.binding.as_ref();
                json!({
                    "id": n.id,
                    "parent": n.parent,
                    "differentiae": n.differentiae,
                    "concept_id": n.concept_id,
                    "label": s.canonical_label(&n.id).ok(),
                    "language": b.map(|b| &b.language),
                    "gloss": b.map(|b| &b.gloss),
                    "synonyms": b.map(|b| &b.synonyms),
                    "depth": s.depth(&n.id),
                })
            })
            .collect();
        Ok(json!({
            "id": s.id(),
            "context": s.context(),
            "version_stamp": s.version_stamp(),
            "properties": properties,
            "nodes": nodes,
        }))
    }

    fn with_replies(
        &self,
        replies: &mut Replies,
        request_id: Option<String>,
        fingerprint: String,
        run: impl FnOnce() -> ApiResponse,
    ) -> ApiResponse {
        if let Some(id) = &request_id {
            if let Some((fp, resp)) = replies.get(id) {
                if *fp == fingerprint {
                    return resp.clone();
                }
                return self.err(
                    ApiError::new(
                        409,
                        "RequestIdReused",
                        "request id was already used for a different request",
                    )
                    .at(id),
                );
            }
        }
        let resp = run();
        if let Some(id) = request_id {
            replies.insert(id, (fingerprint, resp.clone()));
        }
        resp
    }

    fn create_session(&self, body: &[u8]) -> ApiResponse {
        let schema = match self.frozen() {
            Ok(s) => Arc::clone(s),
            Err(e) => return self.err(e),
        };
        let b: CreateSession = match parse_body(body) {
            Ok(b) => b,
            Err(e) => return self.err(e),
        };
        let fp = format!("POST /sessions {}", String::from_utf8_lossy(body));
        let mut replies = lock(&self.open_replies);
        self.with_replies(&mut replies, b.request_id.clone(), fp, || {
            let mut images = vec![];
            for id in &b.images {
                if self.images.is_empty() {
                    images.push(ImageRef::new(id.clone()));
                } else {
                    match self.images.get(id) {
                        Some(e) => images.push(e.image_ref()),
                        None => return self.err(ApiError::not_found("UnknownImage", id)),
                    }
                }
            }
            let session_id = {
                let mut n = lock(&self.next_session);
                let id = format!("s{}", *n);
                *n += 1;
                id
            };
            let config = SessionConfig::classifier(session_id.clone(), b.annotator_id.clone(), images);
            let mut session = match Session::open_with(schema, config, Arc::clone(&self.clock)) {
                Ok(s) => s,
                Err(e) => return self.err(e.into()),
            };
            if let Err(e) = self.log(session.take_events()) {
                return self.err(e);
            }
            let queue = session.queue().to_vec();
            lock(&self.sessions).insert(
                session_id.clone(),
                Arc::new(Mutex::new(SessionEntry {
                    session,
                    replies: BTreeMap::new(),
                })),
            );
            self.ok(json!({ "session_id": session_id, "annotator_id": b.annotator_id, "images": queue }))
        })
    }

    fn log(&self, events: Vec<AuditEvent>) -> Result<(), ApiError> {
        if let Some(a) = &self.audit {
            lock(a).append(&events)?;
        }
        Ok(())
    }

    fn region_op(&self, req: &ApiRequest, region: &str) -> ApiResponse {
        let session = lock(&self.regions).get(region).cloned();
        match session {
            Some(s) => self.session_op(req, &s, Some(region)),
            None => self.err(ApiError::from(EngineError::UnknownRegion(region.to_string()))),
        }
    }

    /// Runs a session-scoped mutation under that session's lock.
    fn session_op(&self, req: &ApiRequest, session_id: &str, region: Option<&str>) -> ApiResponse {
        if let Err(e) = self.frozen() {
            return self.err(e);
        }
        let Some(entry) = lock(&self.sessions).get(session_id).cloned() else {
            return self.err(ApiError::not_found("UnknownSession", session_id));
        };
        let mut entry = lock(&entry);
        let SessionEntry { session, replies } = &mut *entry;
        let request_id = match req.method {
            Method::Delete => req.query.get("request_id").cloned(),
            _ => match serde_json::from_slice::<Json>(&req.body) {
                Ok(j) => j.get("request_id").and_then(Json::as_str).map(String::from),
                Err(_) => None,
            },
        };
        let fp = format!("{:?} {} {}", req.method, req.path, String::from_utf8_lossy(&req.body));
        self.with_replies(replies, request_id, fp, || {
            let result = self.apply(session, req, region);
            let logged = self.log(session.take_events());
            match result.and_then(|p| logged.map(|_| p)) {
                Ok(p) => self.ok(p),
                Err(e) => self.err(e),
            }
        })
    }

    fn apply(&self, session: &mut Session, req: &ApiRequest, region: Option<&str>) -> Result<Json, ApiError> {
        let segs: Vec<&str> = req
            .path
            .trim_matches('/')
            .split('/')
            .filter(|s| !s.is_empty())
            .collect();
        match (req.method, region, segs.as_slice()) {
            (Method::Post, None, [.., "regions"]) => {
                let b: CreateRegion = parse_body(&req.body)?;
                let bbox = BBox::new(b.bbox.x, b.bbox.y, b.bbox.width, b.bbox.height);
                let id = session.localize(&b.image, bbox)?;
                lock(&self.regions).insert(id.clone(), session.id().to_string());
                let state = session.region(&id).expect("just created");
                Ok(json!({ "region_id": id, "image": b.image, "bbox": bbox, "resolution": state.resolution }))
            }
            (Method::Post, Some(r), [.., "assertions"]) => {
                let b: AssertBody = parse_body(&req.body)?;
                let def = session
                    .schema()
                    .property(&b.property)
                    .ok_or_else(|| ApiError::from(EngineError::UnknownProperty(b.property.clone())))?;
                let value = wire_value(&def.domain, &b.value).map_err(|e| e.at(b.property.clone()))?;
                let res = session.assert_property(r, &b.property, value)?;
                Ok(serde_json::to_value(res).expect("serializable"))
            }
            (Method::Delete, Some(r), [.., property]) => {
                let res = session.retract_property(r, property)?;
                Ok(serde_json::to_value(res).expect("serializable"))
            }
            (Method::Post, Some(r), [.., "finalize"]) => {
                let b: FinalizeBody = parse_body(&req.body)?;
                let record = session.finalize(r, b.accept_partial)?;
                if let Some(store) = &self.store {
                    lock(store).append(std::slice::from_ref(&record))?;
                }
                Ok(serde_json::to_value(record).expect("serializable"))
            }
            _ => Err(ApiError::new(404, "NotFound", format!("no route for {}", req.path))),
        }
    }

    fn agreement_report(&self, query: &BTreeMap<String, String>) -> Result<Json, ApiError> {
        let schema = self.frozen()?;
        let stamp = schema.version_stamp().cloned();
        let records = match &self.store {
            Some(store) => lock(store).load(&RecordFilter {
                schema: stamp,
                ..Default::default()
            })?,
            None => vec![],
        };
        let group = |key: &str| -> Option<Vec<String>> {
            query.get(key).map(|v| {
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect()
            })
        };
        let report_for = |names: Option<Vec<String>>| -> Result<AgreementReport, ApiError> {
            let picked: Vec<_> = records
                .iter()
                .filter(|r| names.as_ref().is_none_or(|n| n.contains(&r.annotator_id)))
                .cloned()
                .collect();
            let present: std::collections::BTreeSet<&str> = picked.iter().map(|r| r.annotator_id.as_str()).collect();
            if let Some(n) = &names {
                if let Some(missing) = n.iter().find(|a| !present.contains(a.as_str())) {
                    return Err(
                        ApiError::new(404, "NoSharedItems", format!("annotator `{missing}` has no records"))
                            .at(missing.clone()),
                    );
                }
            }
            if present.len() < 2 {
                return Err(ApiError::new(
                    404,
                    "NoSharedItems",
                    "agreement needs two annotators with records",
                ));
            }
            let m = agreement::build_matrix(&picked, MatchPolicy::default())?;
            if m.annotators().len() == 2 {
                agreement::cohen_kappa(&m, &m.annotators()[0], &m.annotators()[1])?;
            }
            let hierarchy = query
                .get("hierarchical")
                .is_some_and(|v| v == "true")
                .then_some(&**schema);
            Ok(AgreementReport::compute(&m, hierarchy)?)
        };
        let report = report_for(group("annotators"))?;
        let metric = query.get("metric").map(String::as_str).unwrap_or("kappa");
        let value = match metric {
            "kappa" => report.mean_cohen_kappa(),
            "percent" => Some(report.percent_agreement),
            "fleiss" => report.fleiss.kappa.value,
            other => return Err(ApiError::bad_request(format!("unknown metric `{other}`"))),
        };
        let mut payload = json!({
            "metric": metric,
            "value": value,
            "undefined": value.is_none(),
            "report": report,
        });
        if let Some(baseline) = group("baseline") {
            let base = report_for(Some(baseline))?;
            let delta = agreement::compare_conditions(&base, &report)?;
            payload["baseline"] = serde_json::to_value(&base).expect("serializable");
            payload["delta"] = serde_json::to_value(&delta).expect("serializable");
        }
        Ok(payload)
    }

    fn image_list(&self) -> Json {
        let list: Vec<Json> = self
            .images
            .images
            .values()
            .map(|e| json!({ "id": e.id, "width": e.width, "height": e.height, "checksum": e.checksum, "content_type": e.content_type() }))
            .collect();
        json!(list)
    }

    fn image_bytes(&self, id: &str) -> ApiResponse {
        match self.images.read(id) {
            None => self.err(ApiError::not_found("UnknownImage", id)),
            Some(Err(e)) => self.err(e.into()),
            Some(Ok(data)) => ApiResponse {
                status: 200,
                body: Body::Bytes {
                    content_type: self.images.get(id).expect("indexed").content_type(),
                    data,
                },
            },
        }
    }
}

//! C ABI over frozen schemas and classifier sessions.
//!
//! Handles are opaque and owned by the caller, who releases them with the
//! matching `_free` function. Every fallible call returns a [`VtStatus`];
//! on failure [`vt_last_error`] describes the problem. Strings returned
//! through out-parameters are heap-allocated and released with
//! [`vt_string_free`]. Results are JSON in the same shapes as the HTTP API.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::sync::Arc;

use serde_json::Value as Json;
use vtelos_core::dsl;
use vtelos_core::engine::{BBox, EngineError, ImageRef, Session};
use vtelos_core::persist::{self, PersistError};
use vtelos_core::schema::{Domain, PropertyAssertionSet, Schema, SchemaError, Value, ABSENT, PRESENT};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VtStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not UTF-8.
    InvalidUtf8 = 2,
    /// A file could not be read or written.
    Io = 3,
    /// Schema source or file is malformed, fails validation or is not frozen.
    InvalidSchema = 4,
    /// Unknown property, value outside its domain, bad box or malformed JSON.
    InvalidArgument = 5,
    /// Unknown image or region.
    NotFound = 6,
    /// The region is finalized, the property is not asserted, or the result
    /// is partial and partial results were not accepted.
    Conflict = 7,
    /// An internal error; the call had no effect that can be relied on.
    Internal = 8,
}

/// A frozen schema.
pub struct VtSchema {
    schema: Arc<Schema>,
    stamp: CString,
}

/// A classifier session over one schema.
pub struct VtSession {
    session: Session,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(VtStatus, String);

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        let status = match &e {
            EngineError::UnknownImage(_) | EngineError::UnknownRegion(_) => VtStatus::NotFound,
            EngineError::RegionFinalized(_) | EngineError::NotAsserted(_) | EngineError::PartialNotAccepted { .. } => {
                VtStatus::Conflict
            }
            EngineError::SchemaNotFrozen | EngineError::Schema(_) => VtStatus::InvalidSchema,
            _ => VtStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

impl From<SchemaError> for Failure {
    fn from(e: SchemaError) -> Self {
        if let SchemaError::ValidationFailed(report) = &e {
            let mut message = e.to_string();
            for f in report.errors() {
                message.push_str(&format!("\n{} [{}]: {}", f.severity, f.canon, f.message));
            }
            return Failure(VtStatus::InvalidSchema, message);
        }
        EngineError::from(e).into()
    }
}

impl From<PersistError> for Failure {
    fn from(e: PersistError) -> Self {
        let status = if e.is_io() {
            VtStatus::Io
        } else {
            VtStatus::InvalidSchema
        };
        let mut message = e.to_string();
        match e {
            PersistError::Parse(diags) => {
                for d in diags {
                    message.push_str(&format!("\n{d}"));
                }
            }
            PersistError::Schema(s) => return s.into(),
            _ => {}
        }
        Failure(status, message)
    }
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

/// Runs `f`, recording any failure or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> VtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            VtStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_last_error(&message);
            status
        }
        Err(_) => {
            set_last_error("internal error");
            VtStatus::Internal
        }
    }
}

unsafe fn arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(VtStatus::NullArgument, format!("`{name}` is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(VtStatus::InvalidUtf8, format!("`{name}` is not UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure(VtStatus::NullArgument, format!("`{name}` is null")))
}

unsafe fn handle_mut<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| Failure(VtStatus::NullArgument, format!("`{name}` is null")))
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure(VtStatus::NullArgument, "output pointer is null".into()));
    }
    let c = CString::new(s).map_err(|_| Failure(VtStatus::Internal, "result contains a NUL byte".into()))?;
    *out = c.into_raw();
    Ok(())
}

unsafe fn put_json(out: *mut *mut c_char, v: impl serde::Serialize) -> Result<(), Failure> {
    let text = serde_json::to_string(&v).map_err(|e| Failure(VtStatus::Internal, e.to_string()))?;
    put_string(out, text)
}

fn new_schema(schema: Schema) -> Result<*mut VtSchema, Failure> {
    let schema = if schema.is_frozen() { schema } else { schema.freeze()? };
    let stamp = schema
        .version_stamp()
        .map(|s| s.as_str().to_string())
        .unwrap_or_default();
    Ok(Box::into_raw(Box::new(VtSchema {
        schema: Arc::new(schema),
        stamp: CString::new(stamp).unwrap_or_default(),
    })))
}

unsafe fn put_schema(out: *mut *mut VtSchema, schema: Schema) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure(VtStatus::NullArgument, "`out` is null".into()));
    }
    *out = new_schema(schema)?;
    Ok(())
}

fn wire_value(property: &str, domain: &Domain, v: &Json) -> Result<Value, Failure> {
    let bad = || {
        Failure(
            VtStatus::InvalidArgument,
            format!("`{v}` is not a valid value for `{property}`"),
        )
    };
    match v {
        Json::Number(n) => n.as_i64().map(Value::Int).ok_or_else(bad),
        Json::String(s) => Value::parse_for(domain, s).ok_or_else(bad),
        Json::Bool(b) => Ok(Value::symbol(if *b { PRESENT } else { ABSENT })),
        _ => Err(bad()),
    }
}

/// Message for the last failed call on this thread, or an empty string.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn vt_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must be null or a string from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vt_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a schema from a `.vtsf` file or from schema source, freezing
/// source on the way in.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vt_schema_load(path: *const c_char, out: *mut *mut VtSchema) -> VtStatus {
    guard(|| {
        let path = arg(path, "path")?;
        put_schema(out, persist::load_schema_source(Path::new(path))?)
    })
}

/// Parses, validates and freezes schema source text.
///
/// # Safety
/// `source` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vt_schema_from_source(source: *const c_char, out: *mut *mut VtSchema) -> VtStatus {
    guard(|| {
        let source = arg(source, "source")?;
        let lowered = dsl::load_draft(source).map_err(|d| Failure::from(PersistError::Parse(d)))?;
        put_schema(out, lowered.schema)
    })
}

/// # Safety
/// `schema` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vt_schema_free(schema: *mut VtSchema) {
    if !schema.is_null() {
        drop(Box::from_raw(schema));
    }
}

/// The schema's version stamp, `sha256:<hex>`. Owned by the handle.
///
/// # Safety
/// `schema` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vt_schema_stamp(schema: *const VtSchema) -> *const c_char {
    match schema.as_ref() {
        Some(s) => s.stamp.as_ptr(),
        None => ptr::null(),
    }
}

/// Resolves a JSON object of property assertions, for example
/// `{"sound_production": "string_vibration", "taut_string_count": 6}`,
/// and writes the resolution result as JSON.
///
/// # Safety
/// `schema` must be a live handle, `assertions` a NUL-terminated string and
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn vt_schema_resolve(
    schema: *const VtSchema,
    assertions: *const c_char,
    out: *mut *mut c_char,
) -> VtStatus {
    guard(|| {
        let s = &handle(schema, "schema")?.schema;
        let text = arg(assertions, "assertions")?;
        let obj: serde_json::Map<String, Json> =
            serde_json::from_str(text).map_err(|e| Failure(VtStatus::InvalidArgument, format!("assertions: {e}")))?;
        let mut set = PropertyAssertionSet::new();
        for (p, v) in &obj {
            let def = s
                .property(p)
                .ok_or_else(|| Failure::from(EngineError::UnknownProperty(p.clone())))?;
            set.assert(p.clone(), wire_value(p, &def.domain, v)?);
        }
        put_json(out, s.resolve(&set)?)
    })
}

/// Opens a classifier session over `image_count` image ids. The session
/// keeps the schema alive; the schema handle may be freed first.
///
/// # Safety
/// `schema` must be a live handle, the id strings NUL-terminated, `images`
/// an array of `image_count` NUL-terminated strings (or null when the count
/// is zero) and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn vt_session_open(
    schema: *const VtSchema,
    session_id: *const c_char,
    annotator_id: *const c_char,
    images: *const *const c_char,
    image_count: usize,
    out: *mut *mut VtSession,
) -> VtStatus {
    guard(|| {
        let s = Arc::clone(&handle(schema, "schema")?.schema);
        let sid = arg(session_id, "session_id")?;
        let ann = arg(annotator_id, "annotator_id")?;
        if images.is_null() && image_count > 0 {
            return Err(Failure(VtStatus::NullArgument, "`images` is null".into()));
        }
        let mut refs = Vec::with_capacity(image_count);
        for i in 0..image_count {
            refs.push(ImageRef::new(arg(*images.add(i), "images[i]")?));
        }
        if out.is_null() {
            return Err(Failure(VtStatus::NullArgument, "`out` is null".into()));
        }
        let session = Session::open(s, sid, ann, refs)?;
        *out = Box::into_raw(Box::new(VtSession { session }));
        Ok(())
    })
}

/// # Safety
/// `session` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vt_session_free(session: *mut VtSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

/// Draws a box on a queued image and writes the new region id.
///
/// # Safety
/// `session` must be a live handle, `image` NUL-terminated and
/// `region_id` writable.
#[no_mangle]
pub unsafe extern "C" fn vt_session_localize(
    session: *mut VtSession,
    image: *const c_char,
    x: u32,
    y: u32,
    width: u32,
    height: u32,
    region_id: *mut *mut c_char,
) -> VtStatus {
    guard(|| {
        let sess = handle_mut(session, "session")?;
        let image = arg(image, "image")?;
        let id = sess.session.localize(image, BBox::new(x, y, width, height))?;
        put_string(region_id, id)
    })
}

/// Asserts `property = value` on a region, with the value written as in
/// schema source (`6`, `string_vibration`, `present`), and writes the new
/// resolution as JSON.
///
/// # Safety
/// `session` must be a live handle, the strings NUL-terminated and
/// `resolution` writable.
#[no_mangle]
pub unsafe extern "C" fn vt_session_assert(
    session: *mut VtSession,
    region: *const c_char,
    property: *const c_char,
    value: *const c_char,
    resolution: *mut *mut c_char,
) -> VtStatus {
    guard(|| {
        let sess = handle_mut(session, "session")?;
        let region = arg(region, "region")?;
        let property = arg(property, "property")?;
        let text = arg(value, "value")?;
        let def = sess
            .session
            .schema()
            .property(property)
            .ok_or_else(|| Failure::from(EngineError::UnknownProperty(property.to_string())))?;
        let v = Value::parse_for(&def.domain, text).ok_or_else(|| {
            Failure(
                VtStatus::InvalidArgument,
                format!("`{text}` is not a valid value for `{property}`"),
            )
        })?;
        let r = sess.session.assert_property(region, property, v)?;
        put_json(resolution, r)
    })
}

/// Withdraws an assertion and writes the new resolution as JSON.
///
/// # Safety
/// `session` must be a live handle, the strings NUL-terminated and
/// `resolution` writable.
#[no_mangle]
pub unsafe extern "C" fn vt_session_retract(
    session: *mut VtSession,
    region: *const c_char,
    property: *const c_char,
    resolution: *mut *mut c_char,
) -> VtStatus {
    guard(|| {
        let sess = handle_mut(session, "session")?;
        let region = arg(region, "region")?;
        let property = arg(property, "property")?;
        let r = sess.session.retract_property(region, property)?;
        put_json(resolution, r)
    })
}

/// Finalizes a region and writes its annotation record as JSON. Label and
/// concept id come from the schema.
///
/// # Safety
/// `session` must be a live handle, `region` NUL-terminated and `record`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn vt_session_finalize(
    session: *mut VtSession,
    region: *const c_char,
    accept_partial: bool,
    record: *mut *mut c_char,
) -> VtStatus {
    guard(|| {
        let sess = handle_mut(session, "session")?;
        let region = arg(region, "region")?;
        let r = sess.session.finalize(region, accept_partial)?;
        put_json(record, r)
    })
}

use std::ffi::{c_char, CStr, CString};
use std::ptr;

use serde_json::Value as Json;
use vtelos_core::fixtures;
use vtelos_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

unsafe fn take(p: *mut c_char) -> Json {
    assert!(!p.is_null());
    let v = serde_json::from_str(CStr::from_ptr(p).to_str().unwrap()).unwrap();
    vt_string_free(p);
    v
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(vt_last_error()).to_str().unwrap().to_string() }
}

fn music() -> *mut VtSchema {
    let mut s = ptr::null_mut();
    let src = c(fixtures::MUSIC_VTS);
    assert_eq!(unsafe { vt_schema_from_source(src.as_ptr(), &mut s) }, VtStatus::Ok);
    s
}

#[test]
fn stamp_matches_core() {
    let s = music();
    let stamp = unsafe { CStr::from_ptr(vt_schema_stamp(s)) }
        .to_str()
        .unwrap()
        .to_string();
    assert_eq!(
        Some(stamp.as_str()),
        fixtures::music_frozen().version_stamp().map(|v| v.as_str())
    );
    unsafe { vt_schema_free(s) };
    assert!(unsafe { vt_schema_stamp(ptr::null()) }.is_null());
}

#[test]
fn loads_from_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("music.vts");
    std::fs::write(&path, fixtures::MUSIC_VTS).unwrap();
    let mut s = ptr::null_mut();
    let p = c(path.to_str().unwrap());
    assert_eq!(unsafe { vt_schema_load(p.as_ptr(), &mut s) }, VtStatus::Ok);
    unsafe { vt_schema_free(s) };

    let missing = c("/no/such/schema.vts");
    assert_eq!(unsafe { vt_schema_load(missing.as_ptr(), &mut s) }, VtStatus::Io);
    assert!(!last_error().is_empty());
}

#[test]
fn invalid_source_is_refused() {
    let mut s = ptr::null_mut();
    let src = c("schema broken {");
    assert_eq!(
        unsafe { vt_schema_from_source(src.as_ptr(), &mut s) },
        VtStatus::InvalidSchema
    );
    assert!(s.is_null());
    let k4 = c(&fixtures::MUSIC_VTS.replace("taut_string_count = 13", "taut_string_count = 6"));
    assert_eq!(
        unsafe { vt_schema_from_source(k4.as_ptr(), &mut s) },
        VtStatus::InvalidSchema
    );
    assert!(last_error().contains("K4"), "{}", last_error());
}

#[test]
fn resolve_json() {
    let s = music();
    let mut out = ptr::null_mut();
    let a = c(r#"{"sound_production": "string_vibration", "taut_string_count": 13}"#);
    assert_eq!(unsafe { vt_schema_resolve(s, a.as_ptr(), &mut out) }, VtStatus::Ok);
    let r = unsafe { take(out) };
    assert_eq!(r["terminal"], "koto");
    assert_eq!(r["status"], "leaf");

    let bad = c(r#"{"sound_production": "plucking"}"#);
    assert_eq!(
        unsafe { vt_schema_resolve(s, bad.as_ptr(), &mut out) },
        VtStatus::InvalidArgument
    );
    let bad = c("[1, 2]");
    assert_eq!(
        unsafe { vt_schema_resolve(s, bad.as_ptr(), &mut out) },
        VtStatus::InvalidArgument
    );
    assert_eq!(
        unsafe { vt_schema_resolve(ptr::null(), a.as_ptr(), &mut out) },
        VtStatus::NullArgument
    );
    unsafe { vt_schema_free(s) };
}

#[test]
fn session_round_trip() {
    let s = music();
    let (sid, ann, img) = (c("s"), c("ann"), c("img1"));
    let images = [img.as_ptr()];
    let mut sess = ptr::null_mut();
    let st = unsafe { vt_session_open(s, sid.as_ptr(), ann.as_ptr(), images.as_ptr(), 1, &mut sess) };
    assert_eq!(st, VtStatus::Ok);
    // the session holds its own reference to the schema
    unsafe { vt_schema_free(s) };

    let mut region = ptr::null_mut();
    let other = c("img2");
    assert_eq!(
        unsafe { vt_session_localize(sess, other.as_ptr(), 0, 0, 5, 5, &mut region) },
        VtStatus::NotFound
    );
    assert_eq!(
        unsafe { vt_session_localize(sess, img.as_ptr(), 0, 0, 5, 5, &mut region) },
        VtStatus::Ok
    );
    let region_id = unsafe { CStr::from_ptr(region) }.to_owned();

    let mut out = ptr::null_mut();
    let (sp, string) = (c("sound_production"), c("string_vibration"));
    assert_eq!(
        unsafe { vt_session_assert(sess, region_id.as_ptr(), sp.as_ptr(), string.as_ptr(), &mut out) },
        VtStatus::Ok
    );
    assert_eq!(unsafe { take(out) }["status"], "partial");

    assert_eq!(
        unsafe { vt_session_finalize(sess, region_id.as_ptr(), false, &mut out) },
        VtStatus::Conflict
    );

    let (count, six) = (c("taut_string_count"), c("6"));
    assert_eq!(
        unsafe { vt_session_assert(sess, region_id.as_ptr(), count.as_ptr(), six.as_ptr(), &mut out) },
        VtStatus::Ok
    );
    assert_eq!(unsafe { take(out) }["terminal"], "guitar");
    assert_eq!(
        unsafe { vt_session_retract(sess, region_id.as_ptr(), count.as_ptr(), &mut out) },
        VtStatus::Ok
    );
    assert_eq!(unsafe { take(out) }["terminal"], "stringed_instrument");
    let thirteen = c("13");
    assert_eq!(
        unsafe { vt_session_assert(sess, region_id.as_ptr(), count.as_ptr(), thirteen.as_ptr(), &mut out) },
        VtStatus::Ok
    );
    unsafe { vt_string_free(out) };

    assert_eq!(
        unsafe { vt_session_finalize(sess, region_id.as_ptr(), false, &mut out) },
        VtStatus::Ok
    );
    let record = unsafe { take(out) };
    assert_eq!(record["label"], "koto");
    assert_eq!(record["concept_id"], fixtures::KOTO_ID);
    assert_eq!(
        unsafe { vt_session_finalize(sess, region_id.as_ptr(), false, &mut out) },
        VtStatus::Conflict
    );
    assert!(last_error().contains("finalized"));

    unsafe {
        vt_string_free(region);
        vt_session_free(sess);
    }
}

#[test]
fn null_and_bad_utf8_arguments() {
    let s = music();
    let mut sess = ptr::null_mut();
    let sid = c("s");
    assert_eq!(
        unsafe { vt_session_open(s, sid.as_ptr(), ptr::null(), ptr::null(), 0, &mut sess) },
        VtStatus::NullArgument
    );
    assert_eq!(
        unsafe { vt_session_open(s, sid.as_ptr(), sid.as_ptr(), ptr::null(), 2, &mut sess) },
        VtStatus::NullArgument
    );
    let bad = [0xffu8, 0xfe, 0];
    assert_eq!(
        unsafe { vt_session_open(s, bad.as_ptr().cast(), sid.as_ptr(), ptr::null(), 0, &mut sess) },
        VtStatus::InvalidUtf8
    );
    unsafe {
        vt_schema_free(s);
        vt_schema_free(ptr::null_mut());
        vt_session_free(ptr::null_mut());
        vt_string_free(ptr::null_mut());
    }
}

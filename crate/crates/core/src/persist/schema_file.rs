use std::fs;
use std::path::Path;

use super::{io_err, PersistError};
use crate::dsl;
use crate::schema::{Schema, SchemaError, VersionStamp};

pub const VTSF_VERSION: u32 = 1;

/// Renders a schema as `.vtsf`:
///
/// ```text
/// vtsf 1
/// stamp sha256:<hex of the body>
/// frozen true
/// ---
/// <canonical schema text>
/// ```
///
/// Drafts must validate without errors.
pub fn to_vtsf(schema: &Schema) -> Result<String, PersistError> {
    if !schema.is_frozen() {
        let report = schema.validate();
        if report.has_errors() {
            return Err(SchemaError::ValidationFailed(report).into());
        }
    }
    let body = schema.canonical_text();
    Ok(format!(
        "vtsf {VTSF_VERSION}\nstamp {}\nfrozen {}\n---\n{body}",
        VersionStamp::of_text(&body),
        schema.is_frozen()
    ))
}

pub fn from_vtsf(text: &str) -> Result<Schema, PersistError> {
    let corrupt = |m: &str| PersistError::CorruptFile(m.to_string());
    let mut parts = text.splitn(5, '\n');
    let mut line = || parts.next().ok_or_else(|| corrupt("truncated header"));
    let magic = line()?;
    let version = magic
        .strip_prefix("vtsf ")
        .ok_or_else(|| corrupt("missing `vtsf` header"))?;
    if version != VTSF_VERSION.to_string() {
        return Err(PersistError::VersionMismatch {
            found: version.to_string(),
            expected: VTSF_VERSION,
        });
    }
    let stamp = line()?
        .strip_prefix("stamp ")
        .ok_or_else(|| corrupt("missing stamp"))?
        .to_string();
    let frozen = match line()? {
        "frozen true" => true,
        "frozen false" => false,
        _ => return Err(corrupt("missing frozen flag")),
    };
    if line()? != "---" {
        return Err(corrupt("missing header separator"));
    }
    let body = line()?;
    if VersionStamp::of_text(body).as_str() != stamp {
        return Err(corrupt("content hash mismatch"));
    }
    let doc = dsl::parse(body).map_err(PersistError::Parse)?;
    let draft = dsl::lower(&doc).map_err(PersistError::Lower)?.schema;
    if !frozen {
        return Ok(draft);
    }
    let schema = draft.freeze()?;
    if schema.version_stamp().map(VersionStamp::as_str) != Some(stamp.as_str()) {
        return Err(corrupt("frozen body is not canonical"));
    }
    Ok(schema)
}

pub fn save_schema(schema: &Schema, path: &Path) -> Result<(), PersistError> {
    let text = to_vtsf(schema)?;
    fs::write(path, text).map_err(io_err(path))
}

pub fn load_schema(path: &Path) -> Result<Schema, PersistError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let text = String::from_utf8(bytes).map_err(|_| PersistError::CorruptFile("not UTF-8".into()))?;
    from_vtsf(&text)
}

/// Loads a frozen schema from either a `.vtsf` file or `.vts` source, which
/// is frozen on the way in. Files starting with a `vtsf` header are read as
/// `.vtsf` whatever their extension.
pub fn load_schema_source(path: &Path) -> Result<Schema, PersistError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    if text.starts_with("vtsf ") {
        let s = from_vtsf(&text)?;
        return if s.is_frozen() { Ok(s) } else { Ok(s.freeze()?) };
    }
    let lowered = dsl::load_draft(&text).map_err(PersistError::Parse)?;
    Ok(lowered.schema.freeze()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn frozen_round_trip_keeps_stamp() {
        let s = fixtures::music_frozen();
        let back = from_vtsf(&to_vtsf(&s).unwrap()).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.version_stamp(), s.version_stamp());
    }

    #[test]
    fn draft_round_trip_stays_draft() {
        let d = fixtures::music_draft();
        let back = from_vtsf(&to_vtsf(&d).unwrap()).unwrap();
        assert!(!back.is_frozen());
        assert_eq!(back, d);
    }

    #[test]
    fn flipped_byte_is_corrupt() {
        let text = to_vtsf(&fixtures::music_frozen()).unwrap();
        let i = text.find("koto").unwrap();
        let mut bytes = text.into_bytes();
        bytes[i] ^= 0x01;
        let flipped = String::from_utf8(bytes).unwrap();
        assert!(matches!(from_vtsf(&flipped), Err(PersistError::CorruptFile(_))));
    }

    #[test]
    fn other_versions_rejected() {
        let text = to_vtsf(&fixtures::music_frozen())
            .unwrap()
            .replacen("vtsf 1", "vtsf 2", 1);
        assert!(matches!(from_vtsf(&text), Err(PersistError::VersionMismatch { .. })));
    }

    #[test]
    fn invalid_drafts_are_not_saved() {
        let mut d = fixtures::music_draft();
        d.add_root("second", None).unwrap();
        assert!(matches!(
            to_vtsf(&d),
            Err(PersistError::Schema(SchemaError::ValidationFailed(_)))
        ));
    }
}

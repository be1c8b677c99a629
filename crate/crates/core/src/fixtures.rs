//! The musical-instrument schema used throughout the tests and examples.

use crate::schema::{ConceptId, ContextProfile, DifferentiaConstraint, Domain, LexicalBinding, PropertyDef, Schema};

/// DSL source of the fixture.
pub const MUSIC_VTS: &str = include_str!("../fixtures/music.vts");

pub const GUITAR_ID: u64 = 1_278_956;
pub const KOTO_ID: u64 = 1_278_952;
pub const STRINGED_ID: u64 = 1_278_951;

/// The fixture built directly through the authoring API.
pub fn music_draft() -> Schema {
    let mut s = Schema::new(
        "music",
        ContextProfile::new(
            "imagenet-musical-instruments",
            "Classify single musical instruments in photographs by visible sound production and string count",
            "eng",
        ),
        1_278_950,
    )
    .expect("valid context");
    s.add_property(
        PropertyDef::new(
            "sound_production",
            Domain::enumeration(["string_vibration", "air_vibration"]),
        )
        .with_phrase("string_vibration", "stringed")
        .with_phrase("air_vibration", "wind"),
    )
    .expect("fresh property");
    s.add_property(
        PropertyDef::new("taut_string_count", Domain::Integer { min: 0, max: 100 })
            .with_phrase(6, "six taut strings")
            .with_phrase(7, "seven taut strings")
            .with_phrase(13, "thirteen taut strings"),
    )
    .expect("fresh property");
    let eng = |lemma: &str, gloss: &str| Some(LexicalBinding::new(lemma, "eng", gloss));
    s.add_root(
        "musical_instrument",
        eng(
            "musical instrument",
            "a device created or adapted to make musical sounds",
        )
        .map(|b| b.with_synonyms(["instrument"])),
    )
    .expect("root");
    s.add_node(
        "musical_instrument",
        "stringed_instrument",
        vec![DifferentiaConstraint::new("sound_production", "string_vibration")],
        eng(
            "stringed instrument",
            "a stringed musical instrument that produces sound through vibrating strings",
        )
        .map(|b| b.with_synonyms(["chordophone"])),
    )
    .expect("node");
    s.add_node(
        "musical_instrument",
        "wind_instrument",
        vec![DifferentiaConstraint::new("sound_production", "air_vibration")],
        eng(
            "wind instrument",
            "a wind musical instrument that produces sound through vibrating air",
        )
        .map(|b| b.with_synonyms(["aerophone"])),
    )
    .expect("node");
    s.add_node(
        "stringed_instrument",
        "guitar",
        vec![DifferentiaConstraint::new("taut_string_count", 6)],
        eng("guitar", "a stringed instrument with six taut strings"),
    )
    .expect("node");
    s.add_node(
        "stringed_instrument",
        "koto",
        vec![DifferentiaConstraint::new("taut_string_count", 13)],
        eng("koto", "a stringed instrument with thirteen taut strings"),
    )
    .expect("node");
    s.set_concept_id("guitar", Some(ConceptId::new(GUITAR_ID).expect("positive")))
        .expect("draft");
    s
}

pub fn music_frozen() -> Schema {
    music_draft().freeze().expect("fixture is valid")
}

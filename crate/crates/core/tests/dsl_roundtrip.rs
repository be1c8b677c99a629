mod common;

use proptest::prelude::*;
use vtelos_core::dsl;
use vtelos_core::fixtures;

#[test]
fn music_round_trips() {
    let doc = dsl::parse(fixtures::MUSIC_VTS).unwrap();
    common::check_round_trip(&doc).unwrap();
}

#[test]
fn lowered_schema_serializes_back_to_its_document() {
    let lowered = dsl::load_draft(fixtures::MUSIC_VTS).unwrap();
    let again = dsl::serialize(&dsl::document_from_schema(&lowered.schema));
    let reparsed = dsl::load_draft(&again).unwrap();
    assert_eq!(reparsed.schema, lowered.schema);
}

#[test]
fn truncated_music_reports_in_bounds_spans() {
    let text = fixtures::MUSIC_VTS;
    for cut in (0..text.len()).filter(|i| text.is_char_boundary(*i)).step_by(7) {
        common::check_spans(&text[..cut]).unwrap();
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn random_documents_round_trip(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let doc = common::random_document(&mut rng);
        if let Err(e) = common::check_round_trip(&doc) {
            prop_assert!(false, "{}", e);
        }
        let text = dsl::serialize(&doc);
        for _ in 0..4 {
            if let Err(e) = common::check_spans(&common::mutate(&text, &mut rng)) {
                prop_assert!(false, "{}", e);
            }
        }
    }
}

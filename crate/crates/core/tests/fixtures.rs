//! The shipped truth-vector fixtures must stay in lockstep with the
//! built-in study definitions.

use std::fs;
use std::path::PathBuf;

use tsbc::harness::{read_truth_json, write_truth_json};
use tsbc::study::{truth, Study};

fn fixture_path(study: Study) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(format!("truth_study{}.json", study.index()))
}

#[test]
fn shipped_truth_fixtures_match_study_definitions() {
    for study in [Study::One, Study::Two, Study::Three] {
        let path = fixture_path(study);
        let file = fs::File::open(&path)
            .unwrap_or_else(|e| panic!("missing fixture {path:?}: {e}"));
        let fixture = read_truth_json(file).unwrap();
        assert_eq!(fixture, truth(study), "fixture {path:?} is stale");
    }
}

/// Regenerate the fixtures in place:
/// `cargo test -p tsbc --test fixtures -- --ignored regenerate`
#[test]
#[ignore]
fn regenerate_truth_fixtures() {
    for study in [Study::One, Study::Two, Study::Three] {
        let path = fixture_path(study);
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        let file = fs::File::create(&path).unwrap();
        write_truth_json(&truth(study), file).unwrap();
    }
}

use std::io::Write;

use scm_profile::dictionary::{pole_overlap, pole_terms, Dimension, DimensionScheme, Direction, StereotypeDictionary, Tier};
use scm_profile::synth::{synthetic_dictionary, REFERENCE_FULL_POLE_SIZES, REFERENCE_SEED_POLE_SIZES};
use scm_profile::Error;

fn file(contents: &str) -> tempfile::NamedTempFile {
    let mut f = tempfile::Builder::new().suffix(".csv").tempfile().unwrap();
    f.write_all(contents.as_bytes()).unwrap();
    f
}

fn reference_on_disk() -> (tempfile::TempDir, std::path::PathBuf) {
    let dict = synthetic_dictionary("reference", &REFERENCE_SEED_POLE_SIZES, &REFERENCE_FULL_POLE_SIZES);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("reference.csv");
    dict.write_csv(&path).unwrap();
    (dir, path)
}

#[test]
fn reference_seed_pole_sizes_survive_a_round_trip() {
    let (_dir, path) = reference_on_disk();
    let dict = StereotypeDictionary::load(&path, Some(Tier::Seed)).unwrap();
    assert_eq!(dict.label, "reference");
    let n = |d, r| dict.terms(d, r, Tier::Seed).len();
    assert_eq!((n(Dimension::Sociability, Direction::High), n(Dimension::Sociability, Direction::Low)), (43, 42));
    assert_eq!((n(Dimension::Morality, Direction::High), n(Dimension::Morality, Direction::Low)), (51, 69));
    assert!(dict.entries.iter().all(|e| e.tier == Tier::Seed));

    let full = StereotypeDictionary::load(&path, None).unwrap();
    assert_eq!(full.terms(Dimension::Religion, Direction::High, Tier::Full).len(), 146);
    assert_eq!(full.terms(Dimension::Religion, Direction::Low, Tier::Full).len(), 6);
}

#[test]
fn composite_poles_are_unions() {
    let (_dir, path) = reference_on_disk();
    let dict = StereotypeDictionary::load(&path, None).unwrap();
    let two = DimensionScheme::two_d();
    assert_eq!(pole_terms(&dict, &two, "warmth", Direction::High).unwrap().len(), 94);
    assert_eq!(pole_terms(&dict, &two, "competence", Direction::Low).unwrap().len(), 78);
    assert_eq!(pole_overlap(&dict, &two, "warmth", Direction::High).unwrap(), 0);
}

#[test]
fn shared_member_terms_are_counted_once() {
    let f = file("term,dimension,direction,tier\nkind,sociability,high,seed\nkind,morality,high,seed\nfair,morality,high,seed\n");
    let dict = StereotypeDictionary::load(f.path(), None).unwrap();
    let two = DimensionScheme::two_d();
    assert_eq!(pole_terms(&dict, &two, "warmth", Direction::High).unwrap(), vec!["kind", "fair"]);
    assert_eq!(pole_overlap(&dict, &two, "warmth", Direction::High).unwrap(), 1);
}

#[test]
fn one_row_files() {
    for text in ["term,dimension,direction,tier\nnice,sociability,high,seed\n", "nice,sociability,high,seed\n"] {
        let dict = StereotypeDictionary::load(file(text).path(), None).unwrap();
        assert_eq!(dict.len(), 1);
        // a single pole cannot span an axis
        assert!(dict.validate_seed_poles().is_err());
    }
}

#[test]
fn missing_pole_gives_an_empty_list() {
    let f = file("term,dimension,direction,tier\nnice,sociability,high,seed\nrude,sociability,low,seed\n");
    let dict = StereotypeDictionary::load(f.path(), None).unwrap();
    dict.validate_seed_poles().unwrap();
    let seven = DimensionScheme::seven_d();
    assert!(pole_terms(&dict, &seven, "morality", Direction::High).unwrap().is_empty());
    assert!(dict.require_seed_pole(Dimension::Morality).is_err());
}

#[test]
fn normalization_and_duplicates() {
    let f = file("term,dimension,direction,tier,gloss\n  Nice ,sociability,high,seed,pleasant\nnice,sociability,high,seed,\nrude,sociability,low,seed,\n");
    let dict = StereotypeDictionary::load(f.path(), None).unwrap();
    assert_eq!(dict.len(), 2);
    assert_eq!(dict.duplicates_collapsed, 1);
    assert_eq!(dict.entries[0].term, "nice");
    assert_eq!(dict.entries[0].gloss.as_deref(), Some("pleasant"));
}

#[test]
fn politics_and_religion_accept_their_own_pole_names() {
    let f = file(
        "term,dimension,direction,tier\nconservative,politics,traditional,seed\nliberal,politics,progressive,seed\npious,religion,religious,seed\nsecular,religion,non-religious,seed\n",
    );
    let dict = StereotypeDictionary::load(f.path(), None).unwrap();
    assert_eq!(dict.terms(Dimension::Politics, Direction::High, Tier::Seed), vec!["conservative"]);
    assert_eq!(dict.terms(Dimension::Religion, Direction::Low, Tier::Seed), vec!["secular"]);
}

#[test]
fn bad_rows_report_their_line() {
    let cases = [
        ("term,dimension,direction,tier\nnice,sociability,high,seed\nx,kindness,high,seed\n", 3),
        ("term,dimension,direction,tier\nnice,sociability,sideways,seed\n", 2),
        ("term,dimension,direction,tier\nnice,sociability,high,seed\nok,ability,high,gold\n", 3),
        ("term,dimension,direction,tier\nnice,sociability\n", 2),
        ("term,dimension,direction,tier\n   ,sociability,high,seed\n", 2),
    ];
    for (text, want) in cases {
        match StereotypeDictionary::load(file(text).path(), None) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, want, "{text}"),
            other => panic!("{text}: {other:?}"),
        }
    }
}

#[test]
fn one_term_on_both_poles_is_rejected() {
    let f = file("term,dimension,direction,tier\nwarm,sociability,high,seed\nwarm,sociability,low,full\n");
    assert!(matches!(StereotypeDictionary::load(f.path(), None), Err(Error::Validation(_))));
}

#[test]
fn scheme_orders_and_labels() {
    let seven = DimensionScheme::seven_d();
    assert_eq!(
        seven.axis_names(),
        vec!["sociability", "morality", "ability", "agency", "status", "politics", "religion"]
    );
    let politics = seven.axis("politics").unwrap();
    assert_eq!((politics.high_label.as_str(), politics.low_label.as_str()), ("traditional", "progressive"));
    let religion = seven.axis("religion").unwrap();
    assert_eq!((religion.high_label.as_str(), religion.low_label.as_str()), ("religious", "non-religious"));
    let two = DimensionScheme::two_d();
    assert_eq!(two.axis_names(), vec!["warmth", "competence"]);
    assert_eq!(two.axis_of(Dimension::Agency), Some(1));
    assert_eq!(two.axis_of(Dimension::Status), None);
    assert!(two.axis("status").is_err());
}

#[test]
fn write_then_load_is_identity() {
    let dict = synthetic_dictionary("x", &REFERENCE_SEED_POLE_SIZES, &[]);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.csv");
    dict.write_csv(&path).unwrap();
    let back = StereotypeDictionary::load(&path, None).unwrap();
    assert_eq!(back.entries, dict.entries);
}

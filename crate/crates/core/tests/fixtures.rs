//! The files under `fixtures/` must match the in-crate generators.
//! Set `URCA_BLESS=1` to rewrite them.

use std::path::PathBuf;

use urca_core::corpus::{read_dataset_lines, write_dataset};
use urca_core::generation::Script;
use urca_core::synthetic::{five_record_fixture, five_record_script};

fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn dataset() -> String {
    let mut buf = Vec::new();
    write_dataset(&mut buf, &five_record_fixture()).unwrap();
    String::from_utf8(buf).unwrap()
}

fn bad_dataset() -> String {
    let mut records = five_record_fixture();
    records.truncate(3);
    records[1].study.papers.clear();
    records[2].question.right_intervention = records[2].question.left_intervention.clone();
    let mut buf = Vec::new();
    write_dataset(&mut buf, &records).unwrap();
    String::from_utf8(buf).unwrap()
}

fn script() -> String {
    serde_json::to_string_pretty(&five_record_script(&[])).unwrap() + "\n"
}

fn check(name: &str, expected: String) {
    let path = fixtures_dir().join(name);
    if std::env::var_os("URCA_BLESS").is_some() {
        std::fs::write(&path, &expected).unwrap();
        return;
    }
    let actual = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert!(actual == expected, "{name} is stale; rerun with URCA_BLESS=1");
}

#[test]
fn checked_in_fixtures_match_generators() {
    check("dataset.jsonl", dataset());
    check("bad.jsonl", bad_dataset());
    check("script.json", script());
}

#[test]
fn bad_fixture_has_two_invalid_records() {
    let lines = read_dataset_lines(bad_dataset().as_bytes()).unwrap();
    let failures = lines.iter().filter(|(_, r)| r.is_err()).count();
    assert_eq!((lines.len(), failures), (3, 2));
}

#[test]
fn script_fixture_round_trips() {
    let back: Script = serde_json::from_str(&script()).unwrap();
    assert_eq!(back, five_record_script(&[]));
}

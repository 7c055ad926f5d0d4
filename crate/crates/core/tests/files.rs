use std::fs;

use entitle::io::{self, parse_instance, Algorithm, InstanceFile, ReportFile, Verdict};

fn write(dir: &tempfile::TempDir, name: &str, text: &str) -> std::path::PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, text).unwrap();
    path
}

const TWO_PLAYERS: &str = r#"{
  "format": 1,
  "players": [
    {"entitlement": "sqrt(2)/2", "valuation": {"breakpoints": [0, 0.5, 1], "densities": [1.5, 0.5]}},
    {"entitlement": "1 - sqrt(2)/2", "valuation": {"breakpoints": [0, 1], "densities": [1]}}
  ]
}"#;

#[test]
fn instance_file_solves_and_reports_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let inst = parse_instance(&write(&dir, "two.json", TWO_PLAYERS)).unwrap();
    assert_eq!(inst.len(), 2);

    let solution = io::solve(&inst, Algorithm::Algo2 { max_rounds: None }).unwrap();
    let verdict = io::verify(&inst, solution.allocation.pieces(), false);
    let report = ReportFile::new(
        "algo2",
        serde_json::json!({}),
        &solution.allocation,
        solution.ledger.clone(),
        Some(solution.trace.clone()),
        verdict.clone(),
    );
    let again = ReportFile::from_json_str(&report.to_json_string()).unwrap();
    assert_eq!(again, report);
    assert_eq!(io::verify(&inst, &again.pieces(), false), verdict);
}

#[test]
fn missing_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let err = parse_instance(&dir.path().join("absent.json")).unwrap_err();
    assert!(matches!(err, entitle::Error::Io { .. }), "{err}");
}

#[test]
fn input_errors_name_the_file_and_field() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        (
            "bad-sum.json",
            TWO_PLAYERS.replace("1 - sqrt(2)/2", "0.2"),
            "players",
        ),
        (
            "negative.json",
            TWO_PLAYERS.replace("[1.5, 0.5]", "[2.5, -0.5]"),
            "players[0].valuation",
        ),
        (
            "syntax.json",
            TWO_PLAYERS.replace("sqrt(2)/2\"", "sqrt(2/2\""),
            "players[0].entitlement",
        ),
        (
            "version.json",
            TWO_PLAYERS.replace("\"format\": 1", "\"format\": 2"),
            "format",
        ),
        (
            "truncated.json",
            TWO_PLAYERS[..40].to_string(),
            "truncated.json",
        ),
    ];
    for (name, text, field) in cases {
        let err = parse_instance(&write(&dir, name, &text)).unwrap_err();
        assert!(err.is_input_error(), "{name}: {err}");
        let message = err.to_string();
        assert!(
            message.contains(name) && message.contains(field),
            "{name}: {message}"
        );
    }
}

#[test]
fn tampered_allocation_is_a_violation() {
    let inst = InstanceFile::from_json_str(TWO_PLAYERS)
        .unwrap()
        .to_instance()
        .unwrap();
    let solution = io::solve(&inst, Algorithm::Algo1).unwrap();
    let mut pieces = solution.allocation.pieces().to_vec();
    pieces.swap(0, 1);
    pieces[1] = pieces[1].union(&pieces[0]);
    assert!(matches!(
        io::verify(&inst, &pieces, false),
        Verdict::Violation { .. }
    ));
}

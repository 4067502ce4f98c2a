//! Drives the `foa` binary end to end.

use std::path::Path;
use std::process::{Command, Output};

fn foa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_foa"))
        .args(args)
        .env_remove("FOE_DECOMP_THRESHOLD")
        .output()
        .unwrap()
}

fn scenario(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/scenarios")
        .join(format!("{name}.json"))
        .display()
        .to_string()
}

#[test]
fn smoke_exits_zero_and_writes_one_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = foa(&["run", &scenario("smoke"), "--report-dir", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("done"), "{stdout}");
    let reports: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().extension().is_some_and(|x| x == "json"))
        .collect();
    assert_eq!(reports.len(), 1);
    assert!(dir.path().join("summary.txt").exists());
}

#[test]
fn bundled_name_resolves() {
    assert_eq!(foa(&["run", "smoke"]).status.code(), Some(0));
}

#[test]
fn infeasible_exits_one_with_diagnostic() {
    let out = foa(&["run", &scenario("infeasible")]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("infeasible"));
}

#[test]
fn parse_error_exits_two_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.json");
    std::fs::write(&path, "{\n  \"name\": \"x\",\n  \"agents\": [,]\n}").unwrap();
    let out = foa(&["run", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn bad_env_override_exits_two() {
    let out = Command::new(env!("CARGO_BIN_EXE_foa"))
        .args(["run", "smoke"])
        .env("FOE_DECOMP_THRESHOLD", "lots")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn consensus_bench_prints_closed_form_counts() {
    let out = foa(&["bench", "consensus", "--sizes", "2,3,4"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    for (row, c) in rows.iter().zip([2u64, 3, 4]) {
        let cols: Vec<&str> = row.split_whitespace().collect();
        assert_eq!(cols[3].parse::<u64>().unwrap(), 3 * c * (c - 1), "{row}");
    }
}

#[test]
fn clustering_bench_counts_pairs() {
    let out = foa(&["bench", "clustering", "--sizes", "4,8,16"]);
    let text = String::from_utf8(out.stdout).unwrap();
    for (row, n) in text.lines().skip(1).zip([4usize, 8, 16]) {
        let cols: Vec<&str> = row.split_whitespace().collect();
        assert_eq!(cols[1].parse::<usize>().unwrap(), n * (n - 1) / 2);
    }
}

#[test]
fn routing_bench_columns_align() {
    let out = foa(&["bench", "routing", "--sizes", "4,40"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let starts = |l: &str| -> Vec<usize> {
        l.char_indices()
            .filter(|&(i, c)| c != ' ' && (i == 0 || l.as_bytes()[i - 1] == b' '))
            .map(|(i, _)| i)
            .collect()
    };
    let header = starts(lines[0]);
    for l in &lines[1..] {
        assert_eq!(starts(l), header, "{text}");
    }
}

#[test]
fn unknown_bench_mode_is_rejected() {
    assert_eq!(foa(&["bench", "synthesis"]).status.code(), Some(2));
}

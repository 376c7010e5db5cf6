//! Golden-file tests: every experiment kind runs from a committed fixture
//! config and must reproduce the committed report (modulo provenance) and
//! CSV tables byte for byte.
//!
//! Regenerate after an intentional change with
//! `PMORDER_BLESS=1 cargo test -p pmorder-cli --test golden`.

use std::path::{Path, PathBuf};
use std::process::Command;

fn fixture(kind: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(format!("{kind}.json"))
}

fn golden_dir(kind: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(kind)
}

fn scratch_dir(kind: &str) -> PathBuf {
    let mut dir = std::env::temp_dir();
    dir.push(format!("pmorder-golden-{kind}-{}", std::process::id()));
    dir
}

fn run_binary(config: &Path, out: &Path) {
    let status = Command::new(env!("CARGO_BIN_EXE_pmorder"))
        .arg("run")
        .arg(config)
        .arg("--out")
        .arg(out)
        .status()
        .expect("binary runs");
    assert!(status.success(), "pmorder run failed for {}", config.display());
}

fn stripped_report(dir: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(dir.join("report.json")).expect("report exists");
    let mut value: serde_json::Value = serde_json::from_str(&text).expect("report parses");
    value.as_object_mut().expect("report is an object").remove("provenance");
    value
}

fn table_files(dir: &Path) -> Vec<(String, String)> {
    let tables = dir.join("tables");
    let mut out = Vec::new();
    if tables.is_dir() {
        let mut names: Vec<_> = std::fs::read_dir(&tables)
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        names.sort();
        for name in names {
            let content = std::fs::read_to_string(tables.join(&name)).unwrap();
            out.push((name, content));
        }
    }
    out
}

fn check_kind(kind: &str) {
    let out = scratch_dir(kind);
    let _ = std::fs::remove_dir_all(&out);
    run_binary(&fixture(kind), &out);
    let report = stripped_report(&out);
    let tables = table_files(&out);

    let golden = golden_dir(kind);
    if std::env::var_os("PMORDER_BLESS").is_some() {
        let _ = std::fs::remove_dir_all(&golden);
        std::fs::create_dir_all(&golden).unwrap();
        let mut pretty = serde_json::to_string_pretty(&report).unwrap();
        pretty.push('\n');
        std::fs::write(golden.join("report.json"), pretty).unwrap();
        for (name, content) in &tables {
            std::fs::write(golden.join(name), content).unwrap();
        }
        let _ = std::fs::remove_dir_all(&out);
        return;
    }

    let expect: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(golden.join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report, expect, "report drifted for kind {kind}");
    for (name, content) in &tables {
        let expect = std::fs::read_to_string(golden.join(name))
            .unwrap_or_else(|_| panic!("golden table {name} missing for {kind}"));
        assert_eq!(content, &expect, "table {name} drifted for kind {kind}");
    }
    let _ = std::fs::remove_dir_all(&out);
}

#[test]
fn golden_counterexample() {
    check_kind("counterexample");
}

#[test]
fn golden_ordering_sweep() {
    check_kind("ordering-sweep");
}

#[test]
fn golden_averaging() {
    check_kind("averaging");
}

#[test]
fn golden_stratify_abc() {
    check_kind("stratify-abc");
}

#[test]
fn golden_extremal() {
    check_kind("extremal");
}

#[test]
fn golden_gap_brackets() {
    check_kind("gap-brackets");
}

#[test]
fn golden_ring_vs_marginal() {
    check_kind("ring-vs-marginal");
}

#[test]
fn golden_conjecture_probe() {
    check_kind("conjecture-probe");
}

#[test]
fn run_is_reproducible_modulo_provenance() {
    let (a, b) = (scratch_dir("repro-a"), scratch_dir("repro-b"));
    let _ = std::fs::remove_dir_all(&a);
    let _ = std::fs::remove_dir_all(&b);
    run_binary(&fixture("counterexample"), &a);
    run_binary(&fixture("counterexample"), &b);
    assert_eq!(stripped_report(&a), stripped_report(&b));
    assert_eq!(table_files(&a), table_files(&b));
    let _ = std::fs::remove_dir_all(&a);
    let _ = std::fs::remove_dir_all(&b);
}

#[test]
fn bad_configs_exit_nonzero() {
    let dir = scratch_dir("bad-config");
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();

    let empty = dir.join("empty.json");
    std::fs::write(&empty, "").unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_pmorder"))
        .args(["validate"])
        .arg(&empty)
        .status()
        .unwrap();
    assert!(!status.success());

    let unknown_field = dir.join("unknown.json");
    std::fs::write(&unknown_field, r#"{"kind":"counterexample","bogus":1}"#).unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_pmorder"))
        .args(["validate"])
        .arg(&unknown_field)
        .status()
        .unwrap();
    assert!(!status.success());

    let good = fixture("counterexample");
    let status = Command::new(env!("CARGO_BIN_EXE_pmorder"))
        .args(["validate"])
        .arg(&good)
        .status()
        .unwrap();
    assert!(status.success());

    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn list_kinds_names_all_eight() {
    let output = Command::new(env!("CARGO_BIN_EXE_pmorder")).arg("list-kinds").output().unwrap();
    assert!(output.status.success());
    let text = String::from_utf8(output.stdout).unwrap();
    assert_eq!(text.lines().count(), 8);
    assert!(text.contains("counterexample"));
    assert!(text.contains("conjecture-probe"));
}

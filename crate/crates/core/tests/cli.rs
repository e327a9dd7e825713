mod common;

use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sbm-meta")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

#[test]
fn usage_error_exits_1() {
    assert_eq!(run(&["eval", "--bogus"]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
}

#[test]
fn help_exits_0() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_file_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.csv").display().to_string();
    assert_eq!(run(&["eval", "--train", &missing]).status.code(), Some(2));
}

#[test]
fn k_larger_than_train_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let train = write(dir.path(), "t.csv", "0,a\n1,b\n2,a\n");
    assert_eq!(run(&["eval", "--train", &train, "--k", "5"]).status.code(), Some(1));
}

#[test]
fn opposite_pair_scores_zero() {
    let dir = tempfile::tempdir().unwrap();
    let train = write(dir.path(), "opp.csv", "0,0,a\n1,1,b\n");
    let out = run(&["eval", "--train", &train]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("config: "), "{stdout}");
    assert!(stdout.contains("0.0% (0/2)"), "{stdout}");
}

#[test]
fn trivial_search_accepts_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let train = write(dir.path(), "triv.csv", "0,a\n1,a\n2,b\n3,b\n");
    let trace = dir.path().join("trace.jsonl");
    let out = run(&["search", "--train", &train, "--output", &trace.display().to_string()]);
    assert_eq!(out.status.code(), Some(0));
    let lines = std::fs::read_to_string(&trace).unwrap();
    let decisions: Vec<serde_json::Value> = lines
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap())
        .filter(|v| v["record"] == "decision")
        .collect();
    assert_eq!(decisions.len(), 1, "{lines}");
    assert!(decisions[0].to_string().contains("no-improvement"), "{lines}");
}

#[test]
fn monks_eval_reports_test_accuracy() {
    let data = common::data_dir();
    let train = data.join("monks-1.train").display().to_string();
    let test = data.join("monks-1.test").display().to_string();
    let out = run(&["eval", "--format", "monks", "--train", &train, "--test", &test, "--mask", "1,2,5"]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("(120/124)"), "{stdout}");
    assert!(stdout.contains("(432/432)"), "{stdout}");
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use latgen_core::decoder::{format_result, rank_sentences};
use latgen_core::lm::read_model;

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(rel)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_latgen")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn trained(dir: &Path, order: &str) -> PathBuf {
    let out = dir.join(format!("m{order}.ngm"));
    let o = run(&["train", "--corpus", p(&fixture("accuse/corpus.txt")), "--order", order, "--out", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    out
}

fn generated(dir: &Path) -> PathBuf {
    let out = dir.join("a.lat");
    let o = run(&[
        "generate",
        "--grammar",
        p(&fixture("accuse/grammar.lisp")),
        "--lexicon",
        p(&fixture("accuse/lexicon.lisp")),
        "--exceptions",
        p(&fixture("exceptions.tsv")),
        "--input",
        p(&fixture("accuse/input.spl")),
        "--out",
        p(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    out
}

#[test]
fn help_exits_zero() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn unsupported_order_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.ngm");
    let o = run(&["train", "--corpus", p(&fixture("accuse/corpus.txt")), "--order", "4", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!out.exists());
}

#[test]
fn statistical_needs_a_model() {
    let dir = tempfile::tempdir().unwrap();
    let lat = generated(dir.path());
    let o = run(&["extract", "--lattice", p(&lat), "--strategy", "statistical"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--model"));
}

#[test]
fn malformed_spl_reports_position() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.spl");
    fs::write(&bad, "(A / |accuse| :AGENT SHE").unwrap();
    let o = run(&[
        "generate",
        "--grammar",
        p(&fixture("accuse/grammar.lisp")),
        "--lexicon",
        p(&fixture("accuse/lexicon.lisp")),
        "--input",
        p(&bad),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("bad.spl") && err.chars().any(|c| c.is_ascii_digit()), "{err}");
}

#[test]
fn unknown_concept_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("u.spl");
    fs::write(&input, "(A / |accuse| :AGENT SHE :PATIENT (U / |unicorn|))").unwrap();
    let o = run(&[
        "generate",
        "--grammar",
        p(&fixture("accuse/grammar.lisp")),
        "--lexicon",
        p(&fixture("accuse/lexicon.lisp")),
        "--input",
        p(&input),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unicorn"), "{}", stderr(&o));
}

#[test]
fn training_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = fs::read_to_string(trained(dir.path(), "2")).unwrap();
    assert!(a.starts_with("NGM v1 order=2"));
    let b = fs::read_to_string(trained(dir.path(), "2")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn corrupted_model_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let m = trained(dir.path(), "2");
    let text = fs::read_to_string(&m).unwrap().replacen("\t1\t", "\t2\t", 1);
    fs::write(&m, text).unwrap();
    let o = run(&["score", "--model", p(&m), "--sentence", "she stole the car ."]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn extraction_strategies() {
    let dir = tempfile::tempdir().unwrap();
    let lat = generated(dir.path());
    let model = trained(dir.path(), "3");

    let o = run(&["extract", "--lattice", p(&lat), "--strategy", "default"]);
    assert_eq!(stdout(&o), "DEFAULT EXTRACTION\nshe accuses that he steals the auto\n");

    let o = run(&["extract", "--lattice", p(&lat), "--strategy", "random", "--seed", "11"]);
    let first = stdout(&o);
    assert!(first.starts_with("RANDOM EXTRACTION (seed 11)\n"));
    assert_eq!(first, stdout(&run(&["extract", "--lattice", p(&lat), "--strategy", "random", "--seed", "11"])));

    let o = run(&["extract", "--lattice", p(&lat), "--strategy", "random"]);
    assert!(stdout(&o).starts_with("RANDOM EXTRACTION (seed "));

    let o = run(&["extract", "--lattice", p(&lat), "--model", p(&model), "--n", "3"]);
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("STATISTICAL TRIGRAM EXTRACTION"));
    let rest: Vec<&str> = lines.collect();
    assert_eq!(rest.len(), 3);
    assert!(rest[0].starts_with("1\t"));
}

#[test]
fn records_are_json_lines() {
    let dir = tempfile::tempdir().unwrap();
    let lat = generated(dir.path());
    let model = trained(dir.path(), "2");
    let o = run(&["extract", "--lattice", p(&lat), "--model", p(&model), "--n", "4", "--format", "records"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let recs: Vec<serde_json::Value> = stdout(&o).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(recs.len(), 4);
    assert_eq!(recs[0]["rank"], 1);
    assert!(recs[0]["corrected"].as_f64().unwrap() >= recs[1]["corrected"].as_f64().unwrap());
}

#[test]
fn scoring_is_stable_and_rank_agrees_with_library() {
    let dir = tempfile::tempdir().unwrap();
    let model = trained(dir.path(), "2");
    let list = dir.path().join("cands.txt");
    let cands = "the car was stolen by him\nshe charged that he stole the car\nhim stole car\n";
    fs::write(&list, cands).unwrap();

    let a = run(&["score", "--model", p(&model), "--file", p(&list)]);
    let b = run(&["score", "--model", p(&model), "--file", p(&list)]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(stdout(&a).lines().count(), 3);

    let lm = read_model(&fs::read_to_string(&model).unwrap()).unwrap();
    let sents: Vec<Vec<&str>> = cands.lines().map(|l| l.split_whitespace().collect()).collect();
    let expected: String =
        rank_sentences(&lm, &sents).iter().enumerate().map(|(i, s)| format_result(i + 1, s) + "\n").collect();
    assert_eq!(stdout(&run(&["rank", "--model", p(&model), "--file", p(&list)])), expected);
}

#[test]
fn validate_reports_each_file() {
    let o = run(&[
        "validate",
        "--grammar",
        p(&fixture("accuse/grammar.lisp")),
        "--lexicon",
        p(&fixture("accuse/lexicon.lisp")),
        "--spl",
        p(&fixture("accuse/input.spl")),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 3);
}

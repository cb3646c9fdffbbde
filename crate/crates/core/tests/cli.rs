use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(rel)
}

fn goodness(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_goodness"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
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

#[test]
fn ingest_keeps_the_six_eligible_concepts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("filtered.tsv");
    let o = goodness(&["ingest", "--input", p(&fixture("ingest/concepts.tsv")), "--out", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("retained\t6"));
    assert!(stdout(&o).contains("rejected\t4"));
    let kept = fs::read_to_string(&out).unwrap();
    assert_eq!(kept.lines().count(), 6);
    for gone in ["Aspirin", "Laboratory mouse", "Stethoscope", "Insulin"] {
        assert!(!kept.contains(gone), "{gone} survived");
    }
}

#[test]
fn ingest_rejects_empty_input() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("empty.tsv");
    fs::write(&input, "").unwrap();
    let o = goodness(&["ingest", "--input", p(&input), "--out", p(&dir.path().join("o.tsv"))]);
    assert!(!o.status.success());
    assert!(stderr(&o).starts_with("error:"));
}

#[test]
fn ingest_with_everything_excluded_warns() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("c.tsv");
    fs::write(&input, "C1\tAspirin\tENG\tPharmacologic Substance\nC2\tRat\tENG\tMammal\n").unwrap();
    let out = dir.path().join("o.tsv");
    let o = goodness(&["ingest", "--input", p(&input), "--out", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("retained\t0"));
    assert!(stderr(&o).contains("filtered out"));
    assert_eq!(fs::read_to_string(&out).unwrap(), "");
}

#[test]
fn offline_score_matches_the_golden_file_twice() {
    let dir = tempfile::tempdir().unwrap();
    let golden = fs::read_to_string(fixture("score/expected_scored.tsv")).unwrap();
    for run in 0..2 {
        let out = dir.path().join(format!("scored{run}.tsv"));
        let o = goodness(&["--config", p(&fixture("score/run.conf")), "score", "--out", p(&out)]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert_eq!(fs::read_to_string(&out).unwrap(), golden);
    }
}

#[test]
fn offline_score_lists_missing_cache_entries() {
    let dir = tempfile::tempdir().unwrap();
    let concepts = dir.path().join("c.tsv");
    let mut text = fs::read_to_string(fixture("score/concepts.tsv")).unwrap();
    text.push_str("C9199999\tUncached finding\tENG\tFinding\n");
    fs::write(&concepts, text).unwrap();
    let o = goodness(&[
        "--config",
        p(&fixture("score/run.conf")),
        "score",
        "--concepts",
        p(&concepts),
    ]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("Uncached finding"), "{}", stderr(&o));
}

/// Ratings from one rater who agrees with the golden buckets.
fn golden_ratings(dir: &Path) -> PathBuf {
    let golden = fs::read_to_string(fixture("score/expected_scored.tsv")).unwrap();
    let mut csv = String::from("RATER_ID,CUI,LEVEL\n");
    for line in golden.lines() {
        let f: Vec<&str> = line.split('\t').collect();
        let level = match f[7] {
            "Good" => 5,
            "Moderate" => 3,
            _ => 1,
        };
        csv.push_str(&format!("p1,{},{level}\n", f[0]));
        let other = if level == 5 { 4 } else { level };
        csv.push_str(&format!("p2,{},{other}\n", f[0]));
    }
    let path = dir.join("ratings.csv");
    fs::write(&path, csv).unwrap();
    path
}

#[test]
fn grid_optimize_walks_the_whole_simplex() {
    let dir = tempfile::tempdir().unwrap();
    let ratings = golden_ratings(dir.path());
    let trace = dir.path().join("trace.tsv");
    let o = goodness(&[
        "optimize",
        "--scored",
        p(&fixture("score/expected_scored.tsv")),
        "--ratings",
        p(&ratings),
        "--rater",
        "p1",
        "--strategy",
        "grid",
        "--trace",
        p(&trace),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("evaluations\t14640"), "{out}");
    assert!(out.contains("best_value\t1.000000"), "{out}");
    let text = fs::read_to_string(&trace).unwrap();
    let parsed = concept_goodness::optimize::OptimizationTrace::parse(&text).unwrap();
    assert_eq!(parsed.evaluations.len(), 14640);
}

#[test]
fn unknown_strategy_is_a_usage_error() {
    let o = goodness(&["optimize", "--ratings", "r.csv", "--strategy", "annealing"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sample_agree_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let scored = fixture("score/expected_scored.tsv");
    let sample = dir.path().join("sample.json");
    let export = dir.path().join("export.tsv");
    let o = goodness(&[
        "--seed",
        "7",
        "sample",
        "--scored",
        p(&scored),
        "--out",
        p(&sample),
        "--export",
        p(&export),
        "--pool-size",
        "25",
    ]);
    // 20 concepts cannot fill two disjoint pools of 25.
    assert!(!o.status.success());

    let big = dir.path().join("big.tsv");
    let golden = fs::read_to_string(&scored).unwrap();
    let mut text = String::new();
    for copy in 0..3 {
        for line in golden.lines() {
            let (cui, rest) = line.split_once('\t').unwrap();
            text.push_str(&format!("{cui}{copy}\t{rest}\n"));
        }
    }
    fs::write(&big, text).unwrap();
    let o = goodness(&[
        "--seed", "7", "sample", "--scored", p(&big), "--out", p(&sample), "--export", p(&export), "--pool-size", "25",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("items\t50"));
    let exported = fs::read_to_string(&export).unwrap();
    assert_eq!(exported.lines().count(), 50);
    assert!(exported.lines().all(|l| l.split('\t').count() == 2));

    let mut csv = String::new();
    for (i, line) in exported.lines().enumerate() {
        let cui = line.split('\t').next().unwrap();
        csv.push_str(&format!("a,{cui},{}\nb,{cui},{}\n", 1 + i % 5, 1 + (i + 1) % 5));
    }
    let ratings = dir.path().join("r.csv");
    fs::write(&ratings, csv).unwrap();

    let o = goodness(&["agree", "--ratings", p(&ratings), "--scored", p(&big)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("raters"), "{}", stdout(&o));

    let o = goodness(&["report", "--sample", p(&sample), "--ratings", p(&ratings), "--scored", p(&big), "--json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["iteration"], 1);
    assert_eq!(v["ratedItems"], 50);
}

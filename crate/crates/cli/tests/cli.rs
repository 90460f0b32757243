//! End-to-end behavior of the `agr` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn agr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_agr"))
        .args(args)
        .output()
        .expect("spawn agr")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn gen_base(dir: &Path, n: &str, seed: &str) -> String {
    let path = dir.join(format!("base_{n}_{seed}.csv"));
    let out = agr(&["dataset", "gen", "--n", n, "--seed", seed, "--out", path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    path.to_str().unwrap().to_owned()
}

#[test]
fn gen_then_validate_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let base = gen_base(dir.path(), "100", "1");
    let text = fs::read_to_string(&base).unwrap();
    assert_eq!(text.lines().count(), 101, "header plus one row per case");
    let out = agr(&["dataset", "validate", &base]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("100 cases ok"));
}

#[test]
fn gen_is_deterministic_across_processes() {
    let dir = tempfile::tempdir().unwrap();
    let a = gen_base(dir.path(), "80", "9");
    let b_path = dir.path().join("again.csv");
    let out = agr(&["dataset", "gen", "--n", "80", "--seed", "9", "--out", b_path.to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b_path).unwrap());
}

#[test]
fn self_query_ranks_itself_first_with_similarity_one() {
    let dir = tempfile::tempdir().unwrap();
    let base = gen_base(dir.path(), "60", "3");
    let out = agr(&["retrieve", "--base", &base, "--from-case", "0", "--k", "1", "--knn-only"]);
    assert!(out.status.success());
    let body = stdout(&out);
    let mut lines = body.lines();
    assert_eq!(lines.next(), Some("query_id,rank,case_id,similarity,source,asserted_level"));
    assert_eq!(lines.next(), Some("0,1,0,1.000000,KNN,"));
}

#[test]
fn query_features_come_from_set_flags() {
    let dir = tempfile::tempdir().unwrap();
    let base = gen_base(dir.path(), "60", "3");
    let out = agr(&[
        "retrieve", "--base", &base, "--set", "Duration=7", "--set", "HolidayType=Bathing",
        "--k", "3", "--acceptance", "bernoulli:0.8",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let body = stdout(&out);
    assert_eq!(body.lines().count(), 3 + 1 + 2, "header, 3 rows, 2 footers");
    assert!(body.contains("# adaptable_knn = "));
    let bad = agr(&["retrieve", "--base", &base, "--set", "Price=100"]);
    assert_eq!(bad.status.code(), Some(1), "solution features are not settable");
}

#[test]
fn usage_data_and_runtime_failures_use_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    let base = gen_base(dir.path(), "60", "3");
    let usage = agr(&["retrieve", "--base", &base, "--from-case", "0", "--pt", "1.5"]);
    assert_eq!(usage.status.code(), Some(1));
    let missing = agr(&["dataset", "validate", "/nonexistent/base.csv"]);
    assert_eq!(missing.status.code(), Some(2));
    let small = agr(&["dataset", "gen", "--n", "10", "--seed", "1", "--out", "/tmp/x.csv"]);
    assert_eq!(small.status.code(), Some(1));
    let flag = agr(&["retrieve", "--no-such-flag"]);
    assert_eq!(flag.status.code(), Some(1));
}

#[test]
fn corrupt_cell_is_a_data_error_naming_the_row() {
    let dir = tempfile::tempdir().unwrap();
    let base = gen_base(dir.path(), "60", "3");
    let text = fs::read_to_string(&base).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_owned).collect();
    let mut cells: Vec<&str> = lines[1].split(',').collect();
    cells[1] = "abc"; // Duration
    lines[1] = cells.join(",");
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, lines.join("\n") + "\n").unwrap();
    let out = agr(&["dataset", "validate", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr).into_owned();
    assert!(err.contains("row") || err.contains("Transport"), "{err}");
}

#[test]
fn eval_writes_the_declared_files_with_provenance_headers() {
    let dir = tempfile::tempdir().unwrap();
    let base = gen_base(dir.path(), "80", "2");
    let cfg = dir.path().join("sweep.toml");
    fs::write(&cfg, "alphas = [0.95, 1.25]\nks = [1, 3, 5]\nfolds = 3\nseed = 11\n").unwrap();
    let out_dir = dir.path().join("run");
    let out = agr(&[
        "eval", "--base", &base, "--config", cfg.to_str().unwrap(),
        "--out", out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let echoed = stdout(&out);
    let hash_line = echoed.lines().find(|l| l.starts_with("config sha256: ")).unwrap();
    let hash = hash_line.trim_start_matches("config sha256: ");
    for name in [
        "config.toml", "results.csv", "means.csv",
        "pr_knn_a0.95.csv", "pr_knn_a1.25.csv", "pr_hybrid_a0.95.csv", "pr_hybrid_a1.25.csv",
    ] {
        let path = out_dir.join(name);
        assert!(path.exists(), "missing {name}");
        if name.ends_with(".csv") {
            let text = fs::read_to_string(&path).unwrap();
            assert!(text.starts_with(&format!("# config sha256: {hash}\n# seed: 11\n")), "{name}");
        }
    }
    let pr = fs::read_to_string(out_dir.join("pr_knn_a1.25.csv")).unwrap();
    assert!(pr.lines().last().unwrap().starts_with("# auc = "));
    let results = fs::read_to_string(out_dir.join("results.csv")).unwrap();
    assert!(results.contains("strategy,alpha,k,fold,accuracy,precision,recall,f1"));
    assert_eq!(results.lines().filter(|l| !l.starts_with('#')).count(), 1 + 2 * 2 * 3 * 3);
}

#[test]
fn eval_flag_overrides_beat_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let base = gen_base(dir.path(), "80", "2");
    let out_dir = dir.path().join("run");
    let out = agr(&[
        "eval", "--base", &base, "--out", out_dir.to_str().unwrap(),
        "--alphas", "1.0", "--ks", "2,4", "--folds", "2", "--seed", "5",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let cfg = fs::read_to_string(out_dir.join("config.toml")).unwrap();
    assert!(cfg.contains("folds = 2"), "{cfg}");
    assert!(cfg.contains("seed = 5"), "{cfg}");
    let bad = agr(&["eval", "--base", &base, "--out", out_dir.to_str().unwrap(), "--folds", "1"]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn mrf_dump_carries_the_threshold_header_and_case_ids() {
    let dir = tempfile::tempdir().unwrap();
    let base = gen_base(dir.path(), "120", "7");
    let out = agr(&["mrf", "dump", "--base", &base, "--st", "0.9"]);
    assert!(out.status.success());
    let body = stdout(&out);
    let head = body.lines().next().unwrap();
    assert_eq!(head, "l=2 st=0.900000 nodes=120");
    for line in body.lines().skip(1) {
        let parts: Vec<&str> = line.split(' ').collect();
        assert_eq!(parts.len(), 3, "{line}");
        let s: f64 = parts[2].parse().unwrap();
        assert!(s > 0.9 && s <= 1.0, "{line}");
    }
}

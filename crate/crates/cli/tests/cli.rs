use std::path::Path;
use std::process::{Command, Output};

use fairtune::nnet::{load_checkpoint, NetConfig, SizeClass, TinyPpgNet};
use fairtune::synthpg::{read_corpus, Gender};

fn fairtune(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fairtune"))
        .current_dir(dir)
        .args(args)
        .env_remove("FAIRTUNE_WORKERS")
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = fairtune(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn small_corpus(dir: &Path, name: &str) {
    ok(dir, &["--seed", "3", "--out", name, "gen", "--n", "20", "--windows", "3"]);
}

#[test]
fn gen_is_deterministic_and_writes_a_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["--seed", "9", "--out", "a.jsonl", "gen", "--profile", "butppg", "--n", "15"]);
    ok(dir.path(), &["--seed", "9", "--out", "b.jsonl", "gen", "--profile", "butppg", "--n", "15"]);
    let a = std::fs::read(dir.path().join("a.jsonl")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("b.jsonl")).unwrap());
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 15 * 10);
    let side: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("a.jsonl.resolved.json")).unwrap()).unwrap();
    assert_eq!(side["seed"], 9);
    assert_eq!(side["profile"]["name"], "butppg");
}

#[test]
fn mimic_female_share_matches_the_preset() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["--out", "m.jsonl", "gen", "--profile", "mimic", "--n", "1000", "--windows", "1"]);
    let recs = read_corpus(&dir.path().join("m.jsonl")).unwrap();
    let share = recs.iter().filter(|r| r.gender == Gender::Female).count() as f64 / recs.len() as f64;
    let want = fairtune::synthpg::Preset::Mimic.profile().female_fraction;
    assert!((share - want).abs() <= 0.03, "female share {share} vs {want}");
}

#[test]
fn out_of_range_bias_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = fairtune(dir.path(), &["--out", "x.jsonl", "gen", "--bias-strength", "1.5"]);
    assert_eq!(code(&out), 2);
    assert!(!dir.path().join("x.jsonl").exists());
}

#[test]
fn adversarial_with_zero_lambda_matches_unbalanced() {
    let dir = tempfile::tempdir().unwrap();
    small_corpus(dir.path(), "c.jsonl");
    ok(dir.path(), &["--out", "u/ck", "train", "--source", "c.jsonl", "--epochs", "2", "--method", "none"]);
    ok(dir.path(), &["--out", "a/ck", "train", "--source", "c.jsonl", "--epochs", "2", "--method", "adv", "--lambda", "0"]);
    let u = load_checkpoint(&dir.path().join("u/ck")).unwrap();
    let a = load_checkpoint(&dir.path().join("a/ck")).unwrap();
    assert_eq!(u.net.params(), a.net.params());
    assert_eq!(
        std::fs::read(dir.path().join("u/log.csv")).unwrap(),
        std::fs::read(dir.path().join("a/log.csv")).unwrap()
    );
}

#[test]
fn zero_epochs_saves_the_initialization() {
    let dir = tempfile::tempdir().unwrap();
    small_corpus(dir.path(), "c.jsonl");
    ok(dir.path(), &["--seed", "4", "--out", "z/ck", "train", "--source", "c.jsonl", "--epochs", "0", "--size", "s"]);
    let ck = load_checkpoint(&dir.path().join("z/ck")).unwrap();
    let init = TinyPpgNet::new(NetConfig::for_size(SizeClass::S, 4), 4).unwrap();
    assert_eq!(ck.net.params(), init.params());
    let log = std::fs::read_to_string(dir.path().join("z/log.csv")).unwrap();
    assert_eq!(log.lines().count(), 1);
}

#[test]
fn training_log_has_one_row_per_step() {
    let dir = tempfile::tempdir().unwrap();
    small_corpus(dir.path(), "c.jsonl");
    ok(
        dir.path(),
        &["--out", "t/ck", "train", "--source", "c.jsonl", "--epochs", "3", "--batch-size", "5", "--method", "if"],
    );
    let side: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("t/ck.resolved.json")).unwrap()).unwrap();
    let n_train = side["n_train_records"].as_u64().unwrap() as usize;
    let log = std::fs::read_to_string(dir.path().join("t/log.csv")).unwrap();
    let mut lines = log.lines();
    assert_eq!(lines.next().unwrap(), "epoch,step,lr,loss_total,loss_l1,loss_ll,loss_group_F,loss_group_M");
    assert_eq!(lines.count(), 3 * n_train.div_ceil(5));
}

#[test]
fn eval_covers_the_test_split() {
    let dir = tempfile::tempdir().unwrap();
    small_corpus(dir.path(), "c.jsonl");
    ok(dir.path(), &["--out", "t/ck", "train", "--source", "c.jsonl", "--epochs", "1"]);
    ok(dir.path(), &["--out", "e.jsonl", "eval", "--ckpt", "t/ck", "--target", "c.jsonl"]);
    let recs = read_corpus(&dir.path().join("c.jsonl")).unwrap();
    let (_, test) = fairtune::harness::split_by_subject(&recs, 0.8, 0).unwrap();
    let lines = std::fs::read_to_string(dir.path().join("e.jsonl")).unwrap().lines().count();
    assert_eq!(lines, test.len());
    let side: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("e.jsonl.resolved.json")).unwrap()).unwrap();
    assert!(side["metrics"]["mae_total"].as_f64().unwrap() > 0.0);
}

#[test]
fn exit_codes_follow_the_error_kind() {
    let dir = tempfile::tempdir().unwrap();
    small_corpus(dir.path(), "c.jsonl");
    let missing = fairtune(dir.path(), &["train", "--source", "nope.jsonl"]);
    assert_eq!(code(&missing), 3);
    std::fs::write(dir.path().join("bad.jsonl"), "{\"foo\": 1}\n").unwrap();
    assert_eq!(code(&fairtune(dir.path(), &["train", "--source", "bad.jsonl"])), 5);
    std::fs::write(dir.path().join("bad.ck"), b"not a checkpoint").unwrap();
    assert_eq!(code(&fairtune(dir.path(), &["eval", "--ckpt", "bad.ck", "--target", "c.jsonl"])), 5);
    let diverged = fairtune(dir.path(), &["--out", "d/ck", "train", "--source", "c.jsonl", "--epochs", "10", "--lr", "1e300"]);
    assert_eq!(code(&diverged), 4, "{}", String::from_utf8_lossy(&diverged.stderr));
    assert_eq!(code(&fairtune(dir.path(), &["train", "--source", "c.jsonl", "--epochs", "51"])), 2);
}

const TINY: &str = r#"
seeds = [0, 1]
scaling_pairs = [["dalia", "mimic"]]

[train]
epochs = 1
batch_size = 8

[corpora.dalia]
path = "corpora/dalia.jsonl"
generate = { preset = "dalia", n_subjects = 30, windows_per_subject = 2 }

[corpora.butppg]
path = "corpora/butppg.jsonl"
generate = { preset = "butppg", n_subjects = 30, windows_per_subject = 2 }

[corpora.mimic]
path = "corpora/mimic.jsonl"
generate = { preset = "mimic", n_subjects = 30, windows_per_subject = 2 }
"#;

#[test]
fn full_pipeline_writes_reports_and_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("tiny.toml"), TINY).unwrap();
    let first = ok(dir.path(), &["--config", "tiny.toml", "--out", "exp", "all"]);
    // 48 matrix runs, 2 new S-size sweep runs and 24 intra-dataset runs.
    assert!(String::from_utf8_lossy(&first.stdout).contains("all: 74 runs trained"), "{}", String::from_utf8_lossy(&first.stdout));
    let reports = dir.path().join("exp/reports");
    for f in ["table3.csv", "table2.csv", "report.json", "scaling.csv", "scaling_points.csv", "mmd.csv"] {
        assert!(reports.join(f).is_file(), "missing {f}");
    }
    let table = std::fs::read_to_string(reports.join("table3.csv")).unwrap();
    let header: Vec<&str> = table.lines().next().unwrap().split(',').collect();
    assert_eq!(header, fairtune::fairmetrics::REPORT_COLUMNS);
    assert_eq!(table.lines().count(), 1 + 6 * 4);

    let second = ok(dir.path(), &["--config", "tiny.toml", "--out", "exp", "all"]);
    assert!(String::from_utf8_lossy(&second.stdout).contains("all: 0 runs trained"));
    assert_eq!(table, std::fs::read_to_string(reports.join("table3.csv")).unwrap());

    // Rebuilding from the run directories also picks up the intra-dataset
    // runs but reproduces every transfer row.
    ok(dir.path(), &["--out", "again", "report", "--runs", "exp", "--size", "xs"]);
    let rebuilt = std::fs::read_to_string(dir.path().join("again/table3.csv")).unwrap();
    assert_eq!(rebuilt.lines().count(), 1 + 6 * 4 + 3 * 4);
    for line in table.lines() {
        assert!(rebuilt.lines().any(|l| l == line), "missing row {line}");
    }
}

#[test]
fn worker_variable_overrides_the_flag() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("tiny.toml"), TINY).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_fairtune"))
        .current_dir(dir.path())
        .args(["--config", "tiny.toml", "--out", "exp", "--workers", "1", "sweep"])
        .env("FAIRTUNE_WORKERS", "2")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let resolved = std::fs::read_to_string(dir.path().join("exp/sweep.resolved.toml")).unwrap();
    assert!(resolved.lines().any(|l| l.trim() == "workers = 2"), "{resolved}");
    let bad = Command::new(env!("CARGO_BIN_EXE_fairtune"))
        .current_dir(dir.path())
        .args(["--config", "tiny.toml", "--out", "exp", "sweep"])
        .env("FAIRTUNE_WORKERS", "many")
        .output()
        .unwrap();
    assert_eq!(code(&bad), 2);
}

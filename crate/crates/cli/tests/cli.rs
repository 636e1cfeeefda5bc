use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SPEC: &str = r#"
task = "tagging"
n_seeds = 2
[corpus]
synthetic = { n_templates = 10, copies_per_template = 4, vocab_size = 60, n_labels = 3, max_len = 8 }
[loop]
dedup = "ma_siamese"
baselines = ["none"]
initial_fraction = 0.1
per_iter_fraction = 0.3
iterations = 2
k = 4
aux_pairs = 60
record_timing = false
[tagger]
epochs = 40
dim = 32
[siamese]
epochs = 5
"#;

fn a2l(args: &[&str], out_env: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_a2l"));
    cmd.args(args).env_remove("A2L_OUT_DIR");
    if let Some(dir) = out_env {
        cmd.env("A2L_OUT_DIR", dir);
    }
    cmd.output().expect("binary runs")
}

fn spec_file(dir: &Path, text: &str) -> String {
    let path = dir.join("spec.toml");
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn run_writes_reports_and_report_rebuilds_them() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = spec_file(tmp.path(), SPEC);
    let out = tmp.path().join("out");
    let o = a2l(&["run", "--spec", &spec, "--out", out.to_str().unwrap(), "--quiet"], None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(o.stdout.is_empty());
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    let curve = fs::read_to_string(out.join("curve.csv")).unwrap();
    assert!(summary.starts_with("method,"));
    assert_eq!(summary.lines().count(), 3);
    // two methods, iterations 0..=2
    assert_eq!(curve.lines().count(), 1 + 2 * 3);
    assert_eq!(fs::read_dir(out.join("runs")).unwrap().count(), 2 * 2 * 2);

    fs::remove_file(out.join("summary.csv")).unwrap();
    let o = a2l(&["report", "--out", out.to_str().unwrap()], None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(out.join("summary.csv")).unwrap(), summary);
    assert_eq!(String::from_utf8_lossy(&o.stdout), summary);
}

#[test]
fn output_dir_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = spec_file(tmp.path(), SPEC);
    let out = tmp.path().join("env-out");
    let o = a2l(&["score", "--spec", &spec], Some(&out));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let scores = fs::read_to_string(out.join("scores.csv")).unwrap();
    assert!(scores.starts_with("index,score,uncertainty,selected\n"));

    let scores_path = out.join("scores.csv");
    let o = a2l(&["cluster", "--spec", &spec, "--scores", scores_path.to_str().unwrap(), "--seed", "3"], Some(&out));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let clusters = fs::read_to_string(out.join("clusters.csv")).unwrap();
    let selected = scores.lines().skip(1).filter(|l| l.ends_with(",1")).count();
    assert_eq!(clusters.lines().count(), 1 + selected);
    let picked = clusters.lines().skip(1).filter(|l| l.ends_with(",1")).count();
    assert!(picked >= 1 && picked <= 4 * 2);
}

#[test]
fn validation_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = spec_file(tmp.path(), &format!("n_seeds = 0\n{SPEC}"));
    let o = a2l(&["run", "--spec", &bad], None);
    assert_eq!(o.status.code(), Some(1));

    let unknown = spec_file(tmp.path(), &format!("foo = 3\n{SPEC}"));
    let o = a2l(&["run", "--spec", &unknown], None);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("foo"));

    let o = a2l(&["run", "--spec", "/nonexistent/spec.toml"], None);
    assert_eq!(o.status.code(), Some(1));
    let o = a2l(&["frobnicate"], None);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn runtime_failures_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("empty");
    fs::create_dir_all(out.join("runs")).unwrap();
    fs::write(out.join("reference.json"), "not json").unwrap();
    let o = a2l(&["report", "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn translation_scoring_scores_records() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = spec_file(
        tmp.path(),
        "task = \"translation_scoring\"\n[strategy]\nkind = \"cs\"\ntop_fraction = 0.1\n[translation]\nsynthetic_records = 30\n",
    );
    let out = tmp.path().join("t");
    let o = a2l(&["score", "--spec", &spec, "--out", out.to_str().unwrap()], None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let scores = fs::read_to_string(out.join("scores.csv")).unwrap();
    assert_eq!(scores.lines().count(), 31);
    assert_eq!(scores.lines().filter(|l| l.ends_with(",1")).count(), 3);

    let half = spec_file(tmp.path(), "task = \"translation_scoring\"\n[strategy]\nkind = \"ads\"\n[translation]\nsynthetic_records = 30\n");
    let o = a2l(&["score", "--spec", &half, "--out", out.to_str().unwrap()], None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let scores = fs::read_to_string(out.join("scores.csv")).unwrap();
    assert_eq!(scores.lines().filter(|l| l.ends_with(",1")).count(), 15);
}

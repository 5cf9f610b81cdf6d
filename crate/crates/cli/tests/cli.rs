use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_adaoam"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, instances: usize, seed: u64) -> PathBuf {
    let path = dir.join(format!("synth-{seed}.svm"));
    let out = run(&[
        "synth",
        "--instances",
        &instances.to_string(),
        "--dimension",
        "12",
        "--positive-fraction",
        "0.25",
        "--density",
        "0.5",
        "--background-shift",
        "0.8",
        "--seed",
        &seed.to_string(),
        "--output",
        s(&path),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    path
}

#[test]
fn synth_output_has_exact_counts() {
    let dir = scratch("synth");
    let path = synth(&dir, 101, 4);
    let text = fs::read_to_string(&path).unwrap();
    let labels: Vec<&str> = text.lines().map(|l| l.split_whitespace().next().unwrap()).collect();
    assert_eq!(labels.len(), 101);
    // round(101 · 0.25) = 25
    assert_eq!(labels.iter().filter(|l| l.starts_with('+') || **l == "1").count(), 25);
    let again = synth(&scratch("synth-again"), 101, 4);
    assert_eq!(text, fs::read_to_string(again).unwrap());
}

#[test]
fn zero_model_scores_one_half() {
    let dir = scratch("zero");
    let data = synth(&dir, 80, 1);
    let model = dir.join("zero.json");
    // a huge sparsity penalty keeps every weight at zero
    let out = run(&[
        "train", "--data", s(&data), "--algorithm", "sadaoam", "--theta", "1e9", "--output", s(&model),
    ]);
    assert!(out.status.success());
    let out = run(&["eval", "--data", s(&data), "--model", s(&model)]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), "0.5");
}

#[test]
fn train_then_eval_beats_chance() {
    let dir = scratch("train");
    let data = synth(&dir, 300, 2);
    let model = dir.join("m.json");
    assert!(run(&["train", "--data", s(&data), "--output", s(&model)]).status.success());
    let out = run(&["eval", "--data", s(&data), "--model", s(&model)]);
    let auc: f64 = String::from_utf8(out.stdout).unwrap().trim().parse().unwrap();
    assert!(auc > 0.7, "{auc}");
}

#[test]
fn missing_data_is_a_usage_error() {
    let out = run(&["eval", "--model", "m.json"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("--data") && err.contains("Usage"));
    assert_eq!(run(&["train", "--data", "x", "--bogus"]).status.code(), Some(1));
}

#[test]
fn unreadable_inputs_are_data_errors() {
    let dir = scratch("bad");
    let out = run(&["train", "--data", s(&dir.join("missing.svm"))]);
    assert_eq!(out.status.code(), Some(2));
    let bad = dir.join("bad.svm");
    fs::write(&bad, "+1 1:0.5\nnot a line\n").unwrap();
    assert_eq!(run(&["train", "--data", s(&bad)]).status.code(), Some(2));
}

#[test]
fn bench_writes_twenty_rows_per_cell() {
    let dir = scratch("bench");
    let data = synth(&dir, 120, 3);
    let config = dir.join("bench.json");
    fs::write(
        &config,
        format!(
            r#"{{"datasets": ["{}"], "algorithms": ["adaoam", "ogd_pairwise"],
               "eta_grid": [0.25, 1.0], "lambda_grid": [0.01], "seed": 7}}"#,
            data.file_name().unwrap().to_str().unwrap()
        ),
    )
    .unwrap();
    let csv = dir.join("out.csv");
    let out = run(&["bench", "--config", s(&config), "--output", s(&csv), "--jobs", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let first = fs::read_to_string(&csv).unwrap();
    let rows: Vec<&str> = first.lines().skip(1).collect();
    assert_eq!(rows.len(), 40);
    for alg in ["adaoam", "ogd_pairwise"] {
        assert_eq!(rows.iter().filter(|r| r.split(',').nth(1) == Some(alg)).count(), 20);
    }
    assert!(dir.join("out.json").exists());

    assert!(run(&["bench", "--config", s(&config), "--output", s(&csv)]).status.success());
    assert_eq!(first, fs::read_to_string(&csv).unwrap());
}

#[test]
fn curve_and_sweep_emit_csv() {
    let dir = scratch("curves");
    let data = synth(&dir, 150, 5);
    let out = run(&["curve", "--data", s(&data), "--checkpoints", "0,40,80", "--repeats", "2"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().next(), Some("rounds,seed,auc,elapsed_ms"));
    assert_eq!(text.lines().count(), 1 + 3 * 3);
    assert!(text.lines().nth(1).unwrap().starts_with("0,0,0.500000"));

    let out = run(&["sweep", "--data", s(&data), "--repeats", "1", "--theta-grid", "0,1e9"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let last = text.lines().last().unwrap();
    assert!(last.starts_with("1e9,0.000000,0.500000"), "{last}");

    let bad = run(&["curve", "--data", s(&data), "--checkpoints", "50,10"]);
    assert_eq!(bad.status.code(), Some(1));
}

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn tristate(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tristate"))
        .args(args)
        .env("SOURCE_DATE_EPOCH", "1700000000")
        .env_remove("TRISTATE_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", stdout(o)))
}

/// Parses CSV output, skipping the manifest comment.
fn csv_rows(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

#[test]
fn golden_ideal_report_is_reproduced_exactly() {
    let o = tristate(&[
        "keyrate",
        "--states",
        path(&data("ideal_bb84.json")),
        "--config",
        path(&data("golden_config.toml")),
        "--format",
        "json",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = json(&o);
    let golden: Value = serde_json::from_str(&std::fs::read_to_string(data("golden_report.json")).unwrap()).unwrap();
    assert_eq!(out["result"]["report"], golden);
    assert!(golden["key_length"].as_u64().unwrap() > 0);
    assert!(golden["total_bound"].as_f64().unwrap() <= 1e-9);
    assert_eq!(out["manifest"]["command"], "keyrate");
    assert_eq!(out["manifest"]["timestamp"], "2023-11-14T22:13:20Z");
}

#[test]
fn t_at_one_half_is_invalid_input() {
    let o = tristate(&["keyrate", "--states", path(&data("t_at_half.json")), "--config", path(&data("golden_config.toml"))]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("must exceed 1/2"), "{err}");
    assert!(err.contains("t_at_half.json"));
}

#[test]
fn source_without_basis_information_gives_no_key() {
    let o = tristate(&[
        "keyrate",
        "--states",
        path(&data("no_basis_info.json")),
        "--config",
        path(&data("golden_config.toml")),
        "--format",
        "json",
    ]);
    assert_eq!(o.status.code(), Some(1));
    let out = json(&o);
    assert_eq!(out["result"]["source"]["c"], 1.0);
    assert_eq!(out["result"]["report"]["key_length"], 0);
}

#[test]
fn parse_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\n  \"n1\": 100,\n  \"k1\": oops\n}\n").unwrap();
    let o = tristate(&["keyrate", "--states", path(&data("ideal_bb84.json")), "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bad.json:3:"), "{}", stderr(&o));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "n1 = 100\nk1 = \n").unwrap();
    let o = tristate(&["keyrate", "--states", path(&data("ideal_bb84.json")), "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn delta_sweep_is_monotone_and_reaches_zero() {
    let o = tristate(&[
        "sweep",
        "--states",
        path(&data("ideal_bb84.json")),
        "--config",
        path(&data("golden_config.toml")),
        "--sweep",
        "delta=0:0.11:23",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let (header, rows) = csv_rows(&stdout(&o));
    assert_eq!(header[..3], ["delta", "key_length", "nu"]);
    let ell: Vec<u64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert_eq!(ell.len(), 23);
    assert!(ell[0] > 0);
    assert!(ell.windows(2).all(|w| w[1] <= w[0]), "{ell:?}");
    let first_zero = ell.iter().position(|&l| l == 0).expect("key length reaches zero");
    assert!(rows[first_zero][0].parse::<f64>().unwrap() < 0.11);
}

#[test]
fn sweep_flushes_rows_before_a_failure() {
    // delta beyond 1/2 fails validation part way through.
    let o = tristate(&[
        "sweep",
        "--states",
        path(&data("ideal_bb84.json")),
        "--config",
        path(&data("golden_config.toml")),
        "--sweep",
        "delta=0.3:0.6:4",
    ]);
    assert_eq!(o.status.code(), Some(2));
    let (_, rows) = csv_rows(&stdout(&o));
    assert_eq!(rows.len(), 3);
    assert!(stderr(&o).contains("delta = 0.6"), "{}", stderr(&o));
}

#[test]
fn verify_is_deterministic_for_a_seed() {
    let a = tristate(&["verify", "--suite", "all", "--seed", "1", "--format", "json"]);
    let b = tristate(&["verify", "--suite", "all", "--seed", "1", "--format", "json"]);
    assert_eq!(a.status.code(), Some(0), "{}", stdout(&a));
    assert_eq!(a.stdout, b.stdout);
    let out = json(&a);
    assert_eq!(out["result"]["passed"], out["result"]["total"]);
    assert!(out["result"]["total"].as_u64().unwrap() >= 17);
}

#[test]
fn audit_accepts_ideal_and_rejects_phase_perturbation() {
    let o = tristate(&["audit4", "--states", path(&data("ideal_bb84_four.json")), "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let v = json(&o);
    assert_eq!(v["result"]["verdict"]["feasible"], true);
    assert!((v["result"]["verdict"]["q"][0].as_f64().unwrap() - 0.5).abs() < 1e-12);

    let o = tristate(&["audit4", "--states", path(&data("phase_perturbed_four.json"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("violated_condition: cond_4"), "{}", stdout(&o));
}

#[test]
fn audit_needs_the_fourth_state() {
    let o = tristate(&["audit4", "--states", path(&data("ideal_bb84.json"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("gamma_minus"));
}

#[test]
fn audit_sweep_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let o = tristate(&[
        "audit4",
        "--states",
        path(&data("ideal_bb84_four.json")),
        "--sweep",
        "d-phase=0:0.3:31",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let (header, rows) = csv_rows(&std::fs::read_to_string(dir.path().join("audit_sweep.csv")).unwrap());
    assert_eq!(header, ["magnitude", "residual", "feasible", "violated_condition"]);
    assert_eq!(rows.len(), 31);
    assert_eq!(rows[0][2], "true");
    assert!(rows[1..].iter().all(|r| r[2] == "false" && r[3] == "cond_4"));
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("audit_sweep.json")).unwrap()).unwrap();
    assert_eq!(doc["result"]["rows"].as_array().unwrap().len(), 31);
}

#[test]
fn simulation_succeeds_on_a_perfect_link_and_aborts_under_noise() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = tristate(&[
        "simulate",
        "--states",
        path(&data("ideal_bb84.json")),
        "--config",
        path(&data("protocol.json")),
        "--out",
        out,
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["simulate.json", "simulate.csv", "transcript.json", "published.json", "rounds.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let t: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("transcript.json")).unwrap()).unwrap();
    assert_eq!(t["result"]["key_a"], t["result"]["key_b"]);
    assert_eq!(t["manifest"]["seed"], 7);
    let p: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("published.json")).unwrap()).unwrap();
    assert!(p["result"].get("key_a").is_none());

    let o = tristate(&[
        "simulate",
        "--states",
        path(&data("ideal_bb84.json")),
        "--config",
        path(&data("protocol.json")),
        "--channel",
        path(&data("depolarizing.json")),
        "--format",
        "json",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(json(&o)["result"]["first_abort"], "pe");
}

#[test]
fn simulation_is_replayable_from_its_seed() {
    let run = |seed: &str| {
        let dir = tempfile::tempdir().unwrap();
        let o = tristate(&[
            "simulate",
            "--states",
            path(&data("ideal_bb84.json")),
            "--config",
            path(&data("protocol.json")),
            "--channel",
            path(&data("depolarizing.json")),
            "--seed",
            seed,
            "--out",
            dir.path().to_str().unwrap(),
        ]);
        let rounds = std::fs::read_to_string(dir.path().join("rounds.csv")).unwrap();
        (o.status.code(), csv_rows(&rounds).1)
    };
    let (a, b, c) = (run("3"), run("3"), run("4"));
    assert_eq!(a, b);
    assert_ne!(a.1, c.1);
}

#[test]
fn entanglement_based_variant_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("eb.json");
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(data("protocol.json")).unwrap()).unwrap();
    v["variant"] = "entanglement_based".into();
    v["ordering"] = "immediate".into();
    std::fs::write(&cfg, v.to_string()).unwrap();
    let o = tristate(&["simulate", "--states", path(&data("ideal_bb84.json")), "--config", cfg.to_str().unwrap(), "--format", "json"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = json(&o);
    assert_eq!(out["result"]["variant"], "entanglement_based");
    assert!(out["result"]["eb_mapping"]["config"]["M"].as_u64().unwrap() > 20_000);
}

#[test]
fn output_directory_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_tristate"))
        .args(["keyrate", "--states", path(&data("ideal_bb84.json")), "--config", path(&data("golden_config.toml"))])
        .env("TRISTATE_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("keyrate.json")).unwrap()).unwrap();
    let outputs = doc["manifest"]["outputs"].as_array().unwrap();
    assert_eq!(outputs.len(), 2);
    let csv = std::fs::read_to_string(dir.path().join("keyrate.csv")).unwrap();
    assert!(csv.starts_with("# manifest: "));
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(tristate(&["keyrate"]).status.code(), Some(2));
    assert_eq!(tristate(&["frobnicate"]).status.code(), Some(2));
}

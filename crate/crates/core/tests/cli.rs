use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const TWO_SELLERS: &str = r#"{
  "horizon": 2,
  "prices": [{"price": 10, "prob": 0.5}, {"price": 4, "prob": 0.5}],
  "sellers": [
    {"name": "a", "pi": 0.5, "capacity_prior": {"0": 0.5, "1": 0.5}, "actual_capacity": 1},
    {"name": "b", "pi": 0.5, "capacity_prior": {"0": 0.5, "1": 0.5}, "actual_capacity": 0}
  ]
}"#;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_knapsack-game"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_instance(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("instance.json");
    fs::write(&path, text).unwrap();
    path
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn solve_then_check_from_tables() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_instance(dir.path(), TWO_SELLERS);
    let out = dir.path().join("out");

    let r = bin(&["solve", "--config", s(&config), "--out", s(&out)]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));

    let doc = json(&out.join("tables.json"));
    let hash = doc["instance_hash"].as_str().unwrap();
    let csv = fs::read_to_string(out.join("tables.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        format!("# instance_hash={hash}")
    );
    assert_eq!(
        csv.lines().nth(1).unwrap(),
        "seller,t,d,s_1,s_2,value,accept_1,accept_2"
    );

    let nash = out.join("nash.json");
    let r = bin(&["verify-nash", "--tables", s(&out), "--json", s(&nash)]);
    assert_eq!(r.status.code(), Some(0));
    assert_eq!(json(&nash)["failures"], 0);
    assert_eq!(json(&nash)["instance_hash"], hash);

    let props = out.join("properties.json");
    let r = bin(&[
        "check-properties",
        "--tables",
        s(&out.join("tables.json")),
        "--json",
        s(&props),
    ]);
    assert_eq!(r.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&r.stdout).contains("PASS"));
    assert_eq!(json(&props)["results"].as_array().unwrap().len(), 8);

    let oracle = out.join("oracle.json");
    let r = bin(&["oracle-check", "--config", s(&config), "--json", s(&oracle)]);
    assert_eq!(r.status.code(), Some(0));
    let report = json(&oracle);
    assert_eq!(report["passed"], true);
    assert_eq!(report["rows"].as_array().unwrap().len(), 4);
}

#[test]
fn solve_to_csv_path_writes_sibling_json() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_instance(dir.path(), TWO_SELLERS);
    let csv = dir.path().join("nested/values.csv");
    let r = bin(&["solve", "--config", s(&config), "--out", s(&csv)]);
    assert!(r.status.success());
    assert!(csv.exists());
    assert!(dir.path().join("nested/values.json").exists());
}

#[test]
fn tampered_tables_fail_property_check() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_instance(dir.path(), TWO_SELLERS);
    let tables = dir.path().join("tables.json");
    assert!(bin(&[
        "solve",
        "--config",
        s(&config),
        "--out",
        s(&dir.path().join("t.csv")),
        "--json",
        s(&tables)
    ])
    .status
    .success());

    let mut doc = json(&tables);
    for row in doc["rows"].as_array_mut().unwrap() {
        if row["t"] == 1 && row["d"] == 1 {
            row["value"] = Value::from(0.0);
        }
    }
    fs::write(&tables, serde_json::to_string(&doc).unwrap()).unwrap();

    let r = bin(&["check-properties", "--tables", s(&tables)]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stdout).contains("FAIL"));
}

#[test]
fn tables_with_wrong_hash_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_instance(dir.path(), TWO_SELLERS);
    let out = dir.path().join("out");
    assert!(bin(&["solve", "--config", s(&config), "--out", s(&out)])
        .status
        .success());
    let path = out.join("tables.json");
    let mut doc = json(&path);
    doc["instance_hash"] = Value::from("0".repeat(64));
    fs::write(&path, serde_json::to_string(&doc).unwrap()).unwrap();
    let r = bin(&["verify-nash", "--tables", s(&out)]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("does not match"));
}

#[test]
fn invalid_instances_exit_1_with_all_violations() {
    let dir = tempfile::tempdir().unwrap();
    let bad = TWO_SELLERS.replace(
        r#""pi": 0.5, "capacity_prior": {"0": 0.5, "1": 0.5}, "actual_capacity": 0"#,
        r#""pi": 0.6, "capacity_prior": {"0": 0.5, "1": 0.4}, "actual_capacity": 0"#,
    );
    let config = write_instance(dir.path(), &bad);
    let r = bin(&[
        "solve",
        "--config",
        s(&config),
        "--out",
        s(&dir.path().join("o")),
    ]);
    assert_eq!(r.status.code(), Some(1));
    let err = String::from_utf8_lossy(&r.stderr);
    assert!(
        err.contains("selection probabilities sum to 1.1 > 1"),
        "{err}"
    );
    assert!(
        err.contains("seller 2 (b): capacity prior sums to 0.9"),
        "{err}"
    );
    assert!(!dir.path().join("o").exists());

    let unknown = TWO_SELLERS.replacen("\"horizon\"", "\"deadline\": 3, \"horizon\"", 1);
    let config = write_instance(dir.path(), &unknown);
    let r = bin(&["verify-nash", "--config", s(&config)]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("deadline"));
}

#[test]
fn usage_errors_exit_64() {
    assert_eq!(bin(&[]).status.code(), Some(64));
    assert_eq!(bin(&["solve"]).status.code(), Some(64));
    assert_eq!(
        bin(&["simulate", "--config", "a", "--tables", "b"])
            .status
            .code(),
        Some(64)
    );
    assert_eq!(
        bin(&["simulate", "--config", "a", "--mode", "weird"])
            .status
            .code(),
        Some(64)
    );
    assert_eq!(bin(&["--help"]).status.code(), Some(0));
}

#[test]
fn simulate_writes_reports_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_instance(dir.path(), TWO_SELLERS);
    let (report, csv, trace) = (
        dir.path().join("sim.json"),
        dir.path().join("sim.csv"),
        dir.path().join("trace.csv"),
    );
    let r = bin(&[
        "simulate",
        "--config",
        s(&config),
        "--replications",
        "20000",
        "--seed",
        "5",
        "--focal",
        "1",
        "--json",
        s(&report),
        "--out",
        s(&csv),
        "--trace",
        s(&trace),
        "--trace-replications",
        "3",
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let doc = json(&report);
    assert_eq!(doc["focal"], 1);
    assert_eq!(doc["replications"], 20000);
    let z = doc["sellers"][0]["z_score"].as_f64().unwrap();
    assert!(z.abs() <= 3.5, "z = {z}");
    assert_eq!(doc["sellers"][0]["target"].as_f64().unwrap(), 5.25);

    let hash = doc["instance_hash"].as_str().unwrap();
    for path in [&csv, &trace] {
        let text = fs::read_to_string(path).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            format!("# instance_hash={hash}")
        );
    }
    // 3 replications x 2 periods
    assert_eq!(fs::read_to_string(&trace).unwrap().lines().count(), 2 + 6);

    let fixed = dir.path().join("fixed.json");
    let r = bin(&[
        "simulate",
        "--config",
        s(&config),
        "--replications",
        "1000",
        "--mode",
        "fixed",
        "--json",
        s(&fixed),
    ]);
    assert!(r.status.success());
    let doc = json(&fixed);
    assert!(doc["sellers"][0]["target"].is_null());
    assert!(doc["note"].is_string());
    // seller b holds nothing
    assert_eq!(doc["sellers"][1]["mean_revenue"], 0.0);
}

#[test]
fn simulation_is_reproducible_from_seed() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_instance(dir.path(), TWO_SELLERS);
    let run = |name: &str, seed: &str| {
        let path = dir.path().join(name);
        assert!(bin(&[
            "simulate",
            "--config",
            s(&config),
            "--replications",
            "5000",
            "--seed",
            seed,
            "--json",
            s(&path)
        ])
        .status
        .success());
        fs::read(path).unwrap()
    };
    assert_eq!(run("a.json", "9"), run("b.json", "9"));
    assert_ne!(run("a.json", "9"), run("c.json", "10"));
}

#[test]
fn demo_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("demo");
    let r = bin(&["demo", "--out", s(&out), "--replications", "2000", "-q"]);
    assert_eq!(
        r.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&r.stderr)
    );
    assert!(r.stdout.is_empty());
    for f in [
        "instance.json",
        "tables.csv",
        "tables.json",
        "nash.json",
        "properties.json",
        "oracle.json",
        "simulation.json",
        "simulation.csv",
    ] {
        assert!(out.join(f).is_file(), "{f}");
    }
    assert_eq!(
        json(&out.join("simulation.json")).as_array().unwrap().len(),
        2
    );
    assert_eq!(json(&out.join("oracle.json"))["passed"], true);
}

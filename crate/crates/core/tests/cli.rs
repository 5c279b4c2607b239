use std::path::Path;
use std::process::{Command, Output};

fn dse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dse")).args(args).env_remove("DSE_SEED").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn toy(file: &str) -> String {
    format!("{}/fixtures/toy/{file}", env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn cardinality_prints_exact_and_scientific() {
    let o = dse(&["cardinality", "table1"]);
    assert!(o.status.success());
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines, ["76859228160000", "7.69e13"]);

    let o = dse(&["cardinality", "table4", "--constrained"]);
    assert_eq!(stdout(&o).lines().next(), Some("11014963200000"));
}

#[test]
fn exit_codes() {
    assert_eq!(dse(&["validate", "table4"]).status.code(), Some(0));
    assert_eq!(dse(&["--help"]).status.code(), Some(0));
    // bad arguments and bad inputs
    assert_eq!(dse(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(dse(&["validate", "/no/such/schema.json"]).status.code(), Some(1));
    assert_eq!(dse(&["search", "/no/such/experiment.json"]).status.code(), Some(1));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"npu_count\": 4,").unwrap();
    assert_eq!(dse(&["validate", bad.to_str().unwrap()]).status.code(), Some(1));

    // a runtime failure: the output directory cannot be created
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let exp = serde_json::json!({
        "schema": toy("toy_a.json"), "model": "gpt3-175b", "system": "system2",
        "budget": 4, "output_dir": blocker.join("sub").display().to_string(),
    });
    let exp_path = dir.path().join("exp.json");
    std::fs::write(&exp_path, exp.to_string()).unwrap();
    assert_eq!(dse(&["search", exp_path.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn search_then_export() {
    let dir = tempfile::tempdir().unwrap();
    let exp = serde_json::json!({
        "schema": toy("toy_b.json"), "model": "gpt3-175b", "system": "system2",
        "agent": {"kind": "RW", "seed": 4}, "budget": 48,
        "output_dir": dir.path().display().to_string(),
    });
    let exp_path = dir.path().join("exp.json");
    std::fs::write(&exp_path, exp.to_string()).unwrap();
    let o = dse(&["search", exp_path.to_str().unwrap(), "--seed", "9"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(summary["evaluations"], 48);
    assert_eq!(summary["steps"], 3);

    let log = dir.path().join("search.jsonl");
    let out = dir.path().join("out");
    let o = dse(&["export", log.to_str().unwrap(), "--format", "csv", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(Path::new(&out.join("convergence.csv")).is_file());
    assert!(Path::new(&out.join("best_config.csv")).is_file());
    assert_eq!(dse(&["export", log.to_str().unwrap(), "--format", "xml"]).status.code(), Some(1));
}

#[test]
fn simulate_prints_an_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let point = dir.path().join("point.json");
    std::fs::write(
        &point,
        r#"{"dp": 64, "pp": 2, "sp": 1, "weight_sharded": 1, "scheduling_policy": "LIFO",
            "collective_algorithm": ["RI", "DI", "RI", "RHD"], "chunks_per_collective": 4,
            "multidim_collective": "Baseline", "topology": ["RI", "FC", "RI", "SW"],
            "npus_per_dim": [4, 8, 4, 8], "bandwidth_per_dim": [400, 200, 200, 100]}"#,
    )
    .unwrap();
    let o = dse(&["simulate", "table1", point.to_str().unwrap(), "--model", "gpt3-175b", "--system", "system2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let e: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(e["valid"], true);
    assert!(e["latency"].as_f64().unwrap() > 0.0);
}

use std::path::Path;
use std::process::Command;

fn houtu() -> Command {
    Command::new(env!("CARGO_BIN_EXE_houtu"))
}

fn configs() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs"))
}

#[test]
fn run_writes_outputs() {
    let out = tempfile::tempdir().unwrap();
    let st = houtu().args(["run", "--seed", "4", "--out"]).arg(out.path()).arg("--config").arg(configs().join("bound.json")).status().unwrap();
    assert!(st.success());
    for f in ["metrics.json", "trace.csv", "periods.csv", "protocol.jsonl"] {
        assert!(out.path().join(f).exists(), "{f}");
    }
}

#[test]
fn every_sample_config_runs() {
    let out = houtu().args(["sweep", "--seeds", "0..1", "--configs"]).arg(configs().join("*.json")).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 1 + 5);
}

#[test]
fn check_bound_exit_codes() {
    let ok = houtu().arg("check-bound").arg("--config").arg(configs().join("bound.json")).status().unwrap();
    assert_eq!(ok.code(), Some(0));

    // a chain of long, light tasks outlasts the bound
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("chain.json");
    let stage = |i: u32| {
        let preds = if i == 0 { String::new() } else { (i - 1).to_string() };
        let input = if i == 0 { r#", "input": {"bytes_per_task": 0, "placement": "even"}"# } else { "" };
        format!(r#"{{"count": 1, "r": 0.05, "p_s": 60.0, "predecessors": [{preds}], "output_bytes": 0{input}}}"#)
    };
    let stages: Vec<String> = (0..4).map(stage).collect();
    let doc = format!(
        r#"{{"seed": 1, "topology": {{"uniform": {{"dcs": 1, "racks": 2, "nodes_per_rack": 7}}}},
            "workload": {{"jobs": [{{"name": "chain", "release_s": 0, "stages": [{}]}}]}}}}"#,
        stages.join(",")
    );
    std::fs::write(&cfg, doc).unwrap();
    let miss = houtu().arg("check-bound").arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(miss.status.code(), Some(2), "{}", String::from_utf8_lossy(&miss.stderr));
    assert!(String::from_utf8_lossy(&miss.stdout).contains("VIOLATED"));
}

#[test]
fn bad_deployment_is_an_error() {
    let st = houtu().args(["compare", "--deployments", "houtu,nope", "--config"]).arg(configs().join("bound.json")).output().unwrap();
    assert_eq!(st.status.code(), Some(1));
}

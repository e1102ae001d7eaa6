use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn muacp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_muacp"))
        .current_dir(root())
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn bench_codec_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = muacp(&[
        "--out",
        out,
        "--seed",
        "3",
        "bench-codec",
        "--mix",
        "empty",
        "--count",
        "2000",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let bench = json(&dir.path().join("bench_codec.json"));
    assert_eq!(bench["mean_size_bytes"], 11.0);
    assert_eq!(bench["roundtrip_ok"], true);
    let manifest = json(&dir.path().join("manifest.json"));
    assert_eq!(manifest["command"], "bench-codec");
    assert_eq!(manifest["seeds"], serde_json::json!([3]));
    assert!(manifest["files"]
        .as_array()
        .unwrap()
        .iter()
        .any(|f| f == "bench_codec.json"));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(code(&muacp(&["bench-codec", "--count", "10"])), 2);
    assert_eq!(code(&muacp(&["no-such-command"])), 2);
    assert_eq!(code(&muacp(&["--config", "does/not/exist.json", "sim-consensus"])), 2);
    assert_eq!(
        code(&muacp(&[
            "--seed",
            "1",
            "--seeds",
            "configs/seeds_1000.txt",
            "sim-consensus"
        ])),
        2
    );

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{not json").unwrap();
    assert_eq!(code(&muacp(&["--config", bad.to_str().unwrap(), "sim-consensus"])), 2);
    fs::write(&bad, r#"{"n": 3, "bogus": 1}"#).unwrap();
    assert_eq!(code(&muacp(&["--config", bad.to_str().unwrap(), "sim-consensus"])), 2);
    fs::write(&bad, r#"{"name": "x", "entries": [{"verb": "PING", "p": 0.5}]}"#).unwrap();
    assert_eq!(code(&muacp(&["check-bound", bad.to_str().unwrap()])), 2);
}

#[test]
fn shipped_protocols_pass_and_mutated_tau_fails() {
    for p in [
        "inform",
        "request_response",
        "query",
        "subscribe_notify",
        "contract_net",
    ] {
        let o = muacp(&["check-traces", &format!("protocols/{p}.json")]);
        assert_eq!(code(&o), 0, "{p}: {}", String::from_utf8_lossy(&o.stdout));
    }
    let o = muacp(&[
        "check-traces",
        "protocols/request_response.json",
        "--tau",
        "protocols/mutated_tau.json",
    ]);
    assert_eq!(code(&o), 1);
}

#[test]
fn vectors_validate() {
    let dir = tempfile::tempdir().unwrap();
    let o = muacp(&["--out", dir.path().to_str().unwrap(), "validate", "vectors"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let report = json(&dir.path().join("validate.json"));
    assert!(report["vectors"].as_u64().unwrap() >= 12);
}

#[test]
fn wrong_sidecar_is_a_property_failure() {
    let dir = tempfile::tempdir().unwrap();
    fs::copy(root().join("vectors/empty_ping.hex"), dir.path().join("v.hex")).unwrap();
    fs::write(
        dir.path().join("v.json"),
        r#"{"description": "lies", "valid": true, "size": 12}"#,
    )
    .unwrap();
    assert_eq!(code(&muacp(&["validate", dir.path().to_str().unwrap()])), 1);
}

#[test]
fn fixture_distributions_satisfy_the_bound() {
    for entry in fs::read_dir(root().join("configs/distributions")).unwrap() {
        let path = entry.unwrap().path();
        let o = muacp(&["check-bound", path.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", path.display());
        let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
        assert_eq!(report["holds"], true);
    }
}

#[test]
fn consensus_campaign_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let o = muacp(&[
        "--config",
        "configs/consensus_lossless_n3.json",
        "--out",
        dir.path().to_str().unwrap(),
        "sim-consensus",
        "--write-log",
    ]);
    assert_eq!(code(&o), 0);
    let summary = json(&dir.path().join("summary.json"));
    assert_eq!(summary["summary"]["mean_phase_messages"], 12.0);
    let csv = fs::read_to_string(dir.path().join("campaign.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(dir.path().join("logs/seed-1.jsonl").exists());
    let log = fs::read_to_string(dir.path().join("logs/seed-1.jsonl")).unwrap();
    let from_log = muacp(&[
        "check-bound",
        "--from-log",
        dir.path().join("logs/seed-1.jsonl").to_str().unwrap(),
    ]);
    assert!(!log.is_empty());
    assert_eq!(code(&from_log), 0);
}

#[test]
fn seeds_file_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let seeds = dir.path().join("seeds.txt");
    fs::write(&seeds, "4\n5\n").unwrap();
    let o = muacp(&[
        "--config",
        "configs/consensus_lossless_n3.json",
        "--seeds",
        seeds.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
        "sim-consensus",
    ]);
    assert_eq!(code(&o), 0);
    let manifest = json(&dir.path().join("out/manifest.json"));
    assert_eq!(manifest["seeds"], serde_json::json!([4, 5]));
}

#[test]
fn scale_reruns_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("scale.json");
    fs::write(&cfg, r#"{"ns": [20, 40], "start_window": 60}"#).unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = muacp(&[
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "sim-scale",
            "--write-log",
        ]);
        assert_eq!(code(&o), 0);
        out
    };
    let (a, b) = (run("a"), run("b"));
    for f in [
        "scale.json",
        "metrics_n20.csv",
        "metrics_n40_summary.json",
        "log_n40.jsonl",
    ] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let header = fs::read_to_string(a.join("metrics_n20.csv")).unwrap();
    assert!(header.starts_with("tick [ticks],queue_depth [msgs]"));
}

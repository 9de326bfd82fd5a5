use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn ospo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ospo")).args(args).output().expect("spawn ospo")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

/// Writes the default config with small overrides and returns its path.
fn write_config(dir: &Path, edit: impl FnOnce(&mut Value)) -> PathBuf {
    let path = dir.join("config.json");
    let out = ospo(&["init-config", "--output", path.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let mut config: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    config["categories"] = json!({ "attribute": 4, "layout": 4, "non_spatial": 4, "complex": 4 });
    config["simpo"]["epochs"] = json!(5);
    config["analysis"]["compare_prompts"] = json!(12);
    config["output_dir"] = json!(dir.join("run"));
    edit(&mut config);
    fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path
}

#[test]
fn init_config_prints_a_loadable_default() {
    let out = ospo(&["init-config"]);
    assert_eq!(code(&out), 0);
    let config: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(config["backend"]["kind"], "simulator");
    assert_eq!(config["simpo"]["beta"], 10.0);
}

#[test]
fn full_run_then_report_and_validate() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), |_| {});
    let c = config.to_str().unwrap();

    let out = ospo(&["run", "--config", c, "--workers", "2"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.lines().count(), 8, "{stdout}");

    let out = ospo(&["report", "--config", c]);
    assert_eq!(code(&out), 0);
    assert!(dir.path().join("run/report.md").exists());
    assert!(dir.path().join("run/kinds.csv").exists());

    let out = ospo(&["validate", "--config", c]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));

    // A record with no stage marker is a violation.
    let manifest = dir.path().join("run/manifest.jsonl");
    let mut text = fs::read_to_string(&manifest).unwrap();
    text.push_str("{\"sample_id\":\"layout-00001\",\"data\":{}}\n");
    fs::write(&manifest, text).unwrap();
    let out = ospo(&["validate", "--config", c]);
    assert_eq!(code(&out), 4);
    assert!(String::from_utf8_lossy(&out.stdout).contains("[ordering]"));
}

#[test]
fn stages_run_one_at_a_time_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), |_| {});
    let c = config.to_str().unwrap();
    assert_eq!(code(&ospo(&["prompts", "--config", c])), 0);
    let out = ospo(&["score", "--config", c]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("not complete"));
    for stage in ["perturb", "densify", "images", "score", "select"] {
        assert_eq!(code(&ospo(&[stage, "--config", c])), 0, "{stage}");
    }
}

#[test]
fn configuration_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), |c| c["epsilon"] = json!(-1.0));
    assert_eq!(code(&ospo(&["prompts", "--config", bad.to_str().unwrap()])), 2);

    let garbled = dir.path().join("garbled.json");
    fs::write(&garbled, "{ not json").unwrap();
    assert_eq!(code(&ospo(&["run", "--config", garbled.to_str().unwrap()])), 2);

    // Reusing an output directory under a different config.
    let config = write_config(dir.path(), |_| {});
    assert_eq!(code(&ospo(&["prompts", "--config", config.to_str().unwrap()])), 0);
    let reseeded = write_config(dir.path(), |c| c["seed"] = json!(99));
    assert_eq!(code(&ospo(&["perturb", "--config", reseeded.to_str().unwrap()])), 2);
}

#[test]
fn unreachable_backend_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = listener.local_addr().unwrap().port();
    drop(listener);
    let config = write_config(dir.path(), |c| {
        c["backend"] = json!({
            "kind": "remote",
            "base_url": format!("http://127.0.0.1:{port}"),
            "max_attempts": 2,
            "initial_backoff_ms": 1,
            "timeout_secs": 2
        });
    });
    let out = ospo(&["run", "--config", config.to_str().unwrap()]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn compare_writes_its_tables() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), |_| {});
    let out = ospo(&["compare", "--config", config.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("best_of_n_fraction"));
    assert_eq!(stdout.matches("temperature").count(), 3);
    assert!(dir.path().join("run/compare.md").exists());
    assert!(dir.path().join("run/compare_cases.csv").exists());
}

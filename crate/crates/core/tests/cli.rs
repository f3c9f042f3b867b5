mod common;

use std::path::Path;
use std::process::Command;

use personasim::ablation::RunManifest;
use personasim::cli::{run_cli, EXIT_BACKEND, EXIT_INCOMPLETE, EXIT_MISSING_INPUT, EXIT_OK, EXIT_VALIDATION};
use personasim::condition::ConditionId;

fn cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("personasim").chain(args.iter().copied());
    let code = run_cli(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes a run config into `dir` and returns its path.
fn write_config(dir: &Path, extra: &str) -> std::path::PathBuf {
    let f = common::fixtures();
    let text = format!(
        "roster_dir = {:?}\nccd_dir = {:?}\nmemory_dir = {:?}\noutput_dir = {:?}\n{extra}",
        f.join("profiles"),
        f.join("ccd"),
        f.join("memory"),
        dir.join("run"),
    );
    let p = dir.join("run.toml");
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn validate_accepts_fixtures() {
    let f = common::fixtures();
    let (code, out, err) = cli(&[
        "validate",
        path(&f.join("profiles")),
        path(&f.join("ccd/provider_001.json")),
        path(&f.join("memory/provider_001.json")),
        path(&f.join("scenarios.json")),
        path(&f.join("workflows/cbt_short.json")),
        path(&f.join("workflows/community_events.json")),
    ]);
    assert_eq!(code, EXIT_OK, "{out}{err}");
    assert_eq!(out.lines().filter(|l| l.starts_with("ok: ")).count(), 11, "{out}");
}

#[test]
fn validate_reports_out_of_range_trait() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(common::fixtures().join("profiles/provider_001.json")).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["personality"]["openness"] = 7.into();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, v.to_string()).unwrap();
    let (code, out, err) = cli(&["validate", path(&bad)]);
    assert_eq!(code, EXIT_VALIDATION);
    assert!(format!("{out}{err}").contains("openness"), "{out}{err}");
}

#[test]
fn missing_inputs_exit_2() {
    let (code, _, _) = cli(&["validate", "/no/such/profile.json"]);
    assert_eq!(code, EXIT_MISSING_INPUT);
    let (code, _, _) = cli(&["run", "--config", "/no/such/config.toml"]);
    assert_eq!(code, EXIT_MISSING_INPUT);
    let dir = tempfile::tempdir().unwrap();
    let (code, _, _) = cli(&["report", path(dir.path())]);
    assert_eq!(code, EXIT_MISSING_INPUT);
}

#[test]
fn bad_arguments_exit_1() {
    assert_eq!(cli(&["frobnicate"]).0, EXIT_VALIDATION);
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "repetitions = 1\n");
    assert_eq!(cli(&["run", "--config", path(&config), "--format", "yaml"]).0, EXIT_VALIDATION);
    let config = write_config(dir.path(), "colour = \"blue\"\n");
    assert_eq!(cli(&["validate", "--config", path(&config)]).0, EXIT_VALIDATION);
}

#[test]
fn run_rerun_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "repetitions = 2\nconditions = [\"baseline\", \"plus_ccd\"]\n");
    assert_eq!(cli(&["validate", "--config", path(&config)]).0, EXIT_OK);

    let (code, out, err) = cli(&["run", "--config", path(&config), "--format", "structured-text"]);
    assert_eq!(code, EXIT_OK, "{err}");
    let report: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(report["conditions"].as_array().unwrap().len(), 2);
    assert!(err.contains("240 administrations") || err.contains("120/120"), "{err}");

    let (code, _, err) = cli(&["run", "--config", path(&config)]);
    assert_eq!(code, EXIT_OK);
    assert!(err.contains("0 administrations"), "{err}");

    let run = dir.path().join("run");
    let (code, out, _) = cli(&["report", path(&run), "--format", "tabular-text"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("internal_consistency.csv"), "{out}");

    let (code, _, err) = cli(&["run", "--config", path(&config), "--seed", "5"]);
    assert_eq!(code, EXIT_VALIDATION, "{err}");
    assert!(err.contains("force"), "{err}");
}

#[test]
fn unreachable_endpoint_is_a_backend_failure() {
    let dir = tempfile::tempdir().unwrap();
    let extra = format!(
        "mode = \"http\"\nretry_budget = 0\nbatch_size = 4\nconditions = [\"baseline\"]\n[generation]\nendpoint_url = \"{}\"\ntimeout_ms = 2000\n",
        common::closed_url()
    );
    let config = write_config(dir.path(), &extra);
    let (code, _, err) = cli(&["run", "--config", path(&config)]);
    assert_eq!(code, EXIT_BACKEND, "{err}");
    let m = RunManifest::load(&dir.path().join("run")).unwrap();
    assert_eq!(m.state(ConditionId::Baseline).unwrap().completed, 0);
    assert!(!m.is_complete());
}

#[test]
fn endpoint_dying_mid_run_leaves_a_resumable_run() {
    let stub = common::stub_server(|n, _| {
        if n < 30 {
            (200, common::completion("I am careful and organized, and I worry a lot."))
        } else {
            (503, "{}".into())
        }
    });
    let dir = tempfile::tempdir().unwrap();
    let extra = format!(
        "mode = \"http\"\nretry_budget = 0\nbatch_size = 10\nparallelism = 1\nconditions = [\"baseline\"]\n[generation]\nendpoint_url = \"{}\"\n",
        stub.url
    );
    let config = write_config(dir.path(), &extra);
    let (code, _, err) = cli(&["run", "--config", path(&config)]);
    assert_eq!(code, EXIT_INCOMPLETE, "{err}");
    let m = RunManifest::load(&dir.path().join("run")).unwrap();
    assert_eq!(m.state(ConditionId::Baseline).unwrap().completed, 30);
    assert_eq!(stub.hits(), 40);

    let (code, _, err) = cli(&["run", "--config", path(&config)]);
    assert_eq!(code, EXIT_INCOMPLETE, "{err}");
    assert!(err.contains("resume"), "{err}");
}

#[test]
fn chat_from_file() {
    let f = common::fixtures();
    let dir = tempfile::tempdir().unwrap();
    let (code, out, err) = cli(&[
        "chat",
        "--profile",
        path(&f.join("profiles/elderly_patient_001.json")),
        "--ccd",
        path(&f.join("ccd/elderly_patient_001.json")),
        "--memory",
        path(&f.join("memory/elderly_patient_001.json")),
        "--condition",
        "plus_ccd",
        "--scripted",
        "--input",
        path(&f.join("chat_input.txt")),
        "--transcript-dir",
        path(dir.path()),
    ]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert_eq!(out.matches("elderly_patient_001>").count(), 3, "{out}");
    let saved: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
    assert_eq!(saved.len(), 1);
}

#[test]
fn binary_exit_codes() {
    let exe = env!("CARGO_BIN_EXE_personasim");
    let ok = Command::new(exe)
        .args(["validate", path(&common::fixtures().join("profiles"))])
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(EXIT_OK));
    let missing = Command::new(exe).args(["validate", "/no/such/file.json"]).output().unwrap();
    assert_eq!(missing.status.code(), Some(EXIT_MISSING_INPUT));
}

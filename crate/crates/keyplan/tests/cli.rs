use std::process::Command;

fn keyplan(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_keyplan")).args(args).output().unwrap()
}

fn json(out: &std::process::Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

#[test]
fn flag_for_another_command_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = keyplan(&["gen-scenes", "--refined", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&out)["error"], "usage");
}

#[test]
fn missing_dataset_reports_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("none.kdds");
    let out = keyplan(&["stats", "--dataset", missing.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let j = json(&out);
    assert_eq!(j["error"], "io");
    assert!(j["path"].as_str().unwrap().ends_with("none.kdds"));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

#[test]
fn gen_scenes_then_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let out = keyplan(&["gen-scenes", "--seed", "4", "--n-scenes", "3", "--out", a.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = a.join("manifest.json");
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), manifest.to_str().unwrap());
    assert_eq!(std::fs::read_to_string(a.join("scenes.jsonl")).unwrap().lines().count(), 3);

    let b = dir.path().join("b");
    let out = keyplan(&["rerun", manifest.to_str().unwrap(), "--out", b.to_str().unwrap()]);
    assert!(out.status.success());
    for f in ["scenes.jsonl", "metrics.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap());
    }
    let out = keyplan(&["gen-scenes", "--config", manifest.to_str().unwrap(), "--out", b.to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(std::fs::read(a.join("scenes.jsonl")).unwrap(), std::fs::read(b.join("scenes.jsonl")).unwrap());
}

#[test]
fn unknown_subcommand_fails() {
    assert!(!keyplan(&["bogus"]).status.success());
}

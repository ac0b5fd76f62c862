use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_otfs-isac"));
    c.env_remove("OTFS_ISAC_OUT_DIR");
    c
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn stderr_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.trim()).unwrap_or_else(|e| panic!("stderr is not JSON ({e}): {text}"))
}

fn csvs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn shipped_scenarios_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut n = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let out = bin().args(["validate-config", "--scenario"]).arg(&path).output().unwrap();
        assert!(out.status.success(), "{}: {}", path.display(), String::from_utf8_lossy(&out.stderr));
        n += 1;
    }
    assert!(n >= 8);
}

#[test]
fn resolution_matches_wide_band_example() {
    let out = bin().args(["resolution", "--M", "2048", "--df", "120e3"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("range resolution     0.61 m"), "{text}");
}

#[test]
fn same_seed_gives_identical_csvs() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |sub: &str, threads: &str| {
        let dir = tmp.path().join(sub);
        let out = bin()
            .args(["simulate", "--seed", "7", "--trials", "4", "--parallel", threads, "--scenario"])
            .arg(scenario("default.json"))
            .arg("--out")
            .arg(&dir)
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        csvs(&dir)
    };
    let a = run("a", "1");
    let b = run("b", "1");
    let c = run("c", "3");
    assert!(!a.is_empty());
    assert_eq!(a, b);
    assert_eq!(a, c);
}

#[test]
fn env_var_sets_output_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin().env("OTFS_ISAC_OUT_DIR", tmp.path()).arg("crlb").output().unwrap();
    assert!(out.status.success());
    assert!(tmp.path().join("crlb.csv").exists());
    assert!(tmp.path().join("manifest.json").exists());
}

#[test]
fn invalid_scenario_reports_field() {
    let tmp = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(scenario("default.json")).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["system"]["m_delay"] = 0.into();
    let path = tmp.path().join("bad.json");
    fs::write(&path, v.to_string()).unwrap();
    let out = bin().args(["validate-config", "--scenario"]).arg(&path).output().unwrap();
    assert!(!out.status.success());
    let err = stderr_json(&out);
    assert_eq!(err["error"], "ConfigValidationError");
    assert_eq!(err["field"], "system.m_delay");
}

#[test]
fn unknown_field_and_missing_file_are_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("extra.json");
    fs::write(&path, r#"{"name":"x","experiment":"crlb","colour":"blue"}"#).unwrap();
    let out = bin().args(["validate-config", "--scenario"]).arg(&path).output().unwrap();
    assert!(!out.status.success());
    assert_eq!(stderr_json(&out)["error"], "Json");

    let out = bin().args(["simulate", "--scenario", "/nonexistent/s.json"]).output().unwrap();
    assert!(!out.status.success());
    assert_eq!(stderr_json(&out)["error"], "Io");
}

#[test]
fn usage_errors_are_json() {
    let out = bin().args(["resolution", "--M", "many"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "UsageError");
}

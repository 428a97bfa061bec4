use std::path::Path;
use std::process::{Command, Output, Stdio};

const BIN: &str = env!("CARGO_BIN_EXE_bido");

fn bido(args: &[&str], salt: Option<&str>) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args).stdin(Stdio::null()).env_remove("BIDO_SALT");
    if let Some(s) = salt {
        cmd.env("BIDO_SALT", s);
    }
    cmd.output().unwrap()
}

fn simulate(path: &Path, frame_seed: &str) {
    let out = bido(
        &["simulate", "--subjects", "1", "--frames", "250", "--seed", "3", "--frame-seed", frame_seed, "--out", path.to_str().unwrap()],
        None,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn local_enroll_and_auth_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let frames = dir.path().join("frames.jsonl");
    let store = dir.path().join("store.json");
    simulate(&frames, "1");
    let (f, s) = (frames.to_str().unwrap(), store.to_str().unwrap());

    let enrolled = bido(&["enroll", "--frames", f, "--salt-env", "BIDO_SALT", "--store", s], Some("pw"));
    assert_eq!(enrolled.status.code(), Some(0));
    let cred = String::from_utf8(enrolled.stdout).unwrap().trim().to_owned();

    let ok = bido(&["auth", "--frames", f, "--salt-env", "BIDO_SALT", "--store", s, "--cred-id", &cred], Some("pw"));
    assert_eq!(ok.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&ok.stdout).trim(), "accepted");

    let wrong = bido(&["auth", "--frames", f, "--salt-env", "BIDO_SALT", "--store", s, "--cred-id", &cred], Some("pX"));
    assert_eq!(wrong.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&wrong.stderr).contains("AuthTimeout"));
}

#[test]
fn missing_salt_source_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let frames = dir.path().join("frames.jsonl");
    simulate(&frames, "1");
    let store = dir.path().join("store.json");
    let out = bido(&["enroll", "--frames", frames.to_str().unwrap(), "--store", store.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn empty_salt_and_missing_files_are_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    let frames = dir.path().join("frames.jsonl");
    let store = dir.path().join("store.json");
    simulate(&frames, "1");
    let empty = bido(
        &["enroll", "--frames", frames.to_str().unwrap(), "--salt-env", "BIDO_SALT", "--store", store.to_str().unwrap()],
        Some(""),
    );
    assert_eq!(empty.status.code(), Some(3));
    let missing = bido(
        &["enroll", "--frames", "/nonexistent/frames.jsonl", "--salt-env", "BIDO_SALT", "--store", store.to_str().unwrap()],
        Some("pw"),
    );
    assert_eq!(missing.status.code(), Some(3));
}

#[test]
fn malformed_frames_are_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    let frames = dir.path().join("bad.jsonl");
    std::fs::write(&frames, "{\"not\":\"a frame\"}\n").unwrap();
    let out = bido(&["validate", "--frames", frames.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn unreachable_rp_is_transport_error() {
    let dir = tempfile::tempdir().unwrap();
    let frames = dir.path().join("frames.jsonl");
    simulate(&frames, "1");
    let out = bido(
        &["enroll", "--frames", frames.to_str().unwrap(), "--salt-env", "BIDO_SALT", "--rp", "http://127.0.0.1:9"],
        Some("pw"),
    );
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn validate_reports_rejections() {
    let dir = tempfile::tempdir().unwrap();
    let frames = dir.path().join("frames.jsonl");
    let out = bido(
        &["simulate", "--subjects", "2", "--frames", "50", "--invalid-rate", "0.5", "--out", frames.to_str().unwrap()],
        None,
    );
    assert!(out.status.success());
    let out = bido(&["validate", "--frames", frames.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("frames: 100"), "{text}");
    assert!(text.contains("NotExactlyOneFace"), "{text}");
}

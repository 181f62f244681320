#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sinkmatch_core::io::write_embeddings;
use sinkmatch_core::FragmentSet;

pub fn sinkmatch() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sinkmatch"));
    cmd.env_remove("SINKMATCH_THREADS");
    cmd
}

pub fn run(args: &[&str]) -> Output {
    sinkmatch().args(args).output().expect("binary runs")
}

pub fn run_ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "sinkmatch {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

pub fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

pub fn write_sets(dir: &Path, name: &str, sets: &[FragmentSet]) -> PathBuf {
    let path = dir.join(name);
    write_embeddings(&path, sets).unwrap();
    path
}

pub fn s(path: &Path) -> &str {
    path.to_str().unwrap()
}

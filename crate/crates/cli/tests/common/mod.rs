#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn trackedit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trackedit")).args(args).output().expect("binary runs")
}

/// Runs the binary and panics with its stderr on failure.
pub fn ok(args: &[&str]) -> String {
    let out = trackedit(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

pub fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Every file under `dir` with its bytes, keyed by relative path.
pub fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

/// Three full-size procedural pairs; 16 frames of 32×32 with depth and masks.
pub const TOY_DATASET: &str = r#"{"train": {"pairs": 3, "held_out": 1}}"#;

/// A tiny model that trains in about a second.
pub const TINY_TRAIN: &str = r#"{"train": {
    "scene": {"frames": 4, "height": 8, "width": 8, "tracks": 12},
    "pairs": 6, "held_out": 2, "epochs": 2, "d": 8, "denoiser_heads": 2, "blocks": 1,
    "patch": [2, 4, 4], "eval_steps": 2
}}"#;

/// Writes `config` to `root/name` and returns the path.
pub fn config(root: &Path, name: &str, config: &str) -> PathBuf {
    let path = root.join(name);
    std::fs::write(&path, config).unwrap();
    path
}

/// Generates the toy dataset under `root/toy` and returns the first pair.
pub fn toy_project(root: &Path) -> PathBuf {
    let cfg = config(root, "dataset.json", TOY_DATASET);
    let out = root.join("toy");
    ok(&["gen-toy", "--config", arg(&cfg), "--out", arg(&out)]);
    out.join("pair_000000")
}

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

pub fn run<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    Command::new(env!("CARGO_BIN_EXE_trajplan"))
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 stdout")
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("utf-8 stderr")
}

pub fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(rel)
}

pub fn records(text: &str) -> Vec<Value> {
    text.lines().map(|l| serde_json::from_str(l).expect("record line is JSON")).collect()
}

/// A minimal valid record with a constant-position ground truth.
pub fn record(id: &str, gt: [[f64; 2]; 6], poses: Option<[[f64; 2]; 4]>) -> Value {
    let mut r = json!({
        "sample_id": id,
        "split": "test",
        "ego": {
            "velocity": [0.0, 5.0],
            "acceleration": [0.0, 0.0],
            "yaw_deg": 0.0,
            "history": [[0.0, -7.5], [0.0, -5.0], [0.0, -2.5]],
            "mission_goal": "go straight"
        },
        "objects": [],
        "gt_trajectory": gt,
        "gt_mask": [1, 1, 1, 1, 1, 1],
        "gt_actions": [["STRAIGHT", "MAINTAIN"], ["STRAIGHT", "MAINTAIN"], ["STRAIGHT", "MAINTAIN"]],
    });
    if let Some(p) = poses {
        r["poses"] = json!(p);
    }
    r
}

pub fn straight(speed: f64) -> [[f64; 2]; 6] {
    std::array::from_fn(|i| [0.0, speed * 0.5 * (i + 1) as f64])
}

pub fn write_jsonl(path: &Path, values: &[Value]) {
    let text: String = values.iter().map(|v| v.to_string() + "\n").collect();
    std::fs::write(path, text).unwrap();
}

/// Generates a synthetic dataset into `dir` and returns the record file.
pub fn synthetic(dir: &Path, n: usize, seed: u64) -> PathBuf {
    let path = dir.join("synthetic.jsonl");
    let out = run([
        "gen-synthetic",
        "--n",
        &n.to_string(),
        "--seed",
        &seed.to_string(),
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    path
}

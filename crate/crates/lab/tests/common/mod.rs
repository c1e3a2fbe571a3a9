#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use distill_lab::ExperimentConfig;

/// A sine experiment small enough to run in well under a second per stage.
pub const TINY_SINE: &str = r#"{
  "task": {"kind": "sine", "n_train": 160, "n_val": 80, "n_test": 160},
  "teacher": {"hidden": [12, 12]},
  "sft": {"epochs": 2, "n_checkpoints": 4},
  "student_sft": {"epochs": 2, "n_checkpoints": 3},
  "distill": {"phase_steps": 10, "eval_every": 5},
  "schedule_eval_size": 40,
  "seeds": [0, 1]
}"#;

pub fn tiny_config() -> ExperimentConfig {
    ExperimentConfig::from_json_str(TINY_SINE).expect("tiny config parses")
}

pub fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

pub fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_distill-lab"))
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Every file below `dir`, as sorted paths relative to it.
pub fn tree(dir: &Path) -> Vec<PathBuf> {
    fn walk(base: &Path, dir: &Path, out: &mut Vec<PathBuf>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(base, &path, out);
            } else {
                out.push(path.strip_prefix(base).unwrap().to_path_buf());
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort();
    out
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

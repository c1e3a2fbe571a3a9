mod common;

use std::fs;

use common::{cli, stderr, write_config, TINY_SINE};
use distill_lab::manifest::{RunManifest, StageState};

#[test]
fn missing_required_field_exits_with_config_error_naming_it() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", r#"{"seeds": [0]}"#);
    let out = cli(&[
        "sft",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("`task`"), "{}", stderr(&out));
}

#[test]
fn bad_nested_field_reports_its_path() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        r#"{"task": {"kind": "sine"}, "distill": {"taid": {"start": "a"}}}"#,
    );
    let out = cli(&["sft", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("distill.taid.start"), "{}", stderr(&out));

    let cfg = write_config(
        tmp.path(),
        "d.json",
        r#"{"task": {"kind": "sine"}, "sft": {"epoch": 3}}"#,
    );
    let out = cli(&["sft", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(
        stderr(&out).contains("sft.epoch: unknown field `epoch`"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn sft_writes_ok_manifest_and_refuses_rerun_without_force() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", TINY_SINE);
    let root = tmp.path().join("out");
    let args = [
        "sft",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        root.to_str().unwrap(),
        "--seeds",
        "0",
    ];
    let out = cli(&args);
    assert!(out.status.success(), "{}", stderr(&out));
    let dir = root.join("sine/sft/0");
    let manifest = RunManifest::read(&dir).unwrap().unwrap();
    assert_eq!(manifest.stages["sft"].status, StageState::Ok);
    assert!(manifest.finished_unix.is_some());
    for f in [
        "teacher/manifest.json",
        "student_sft/manifest.json",
        "config.resolved.json",
        "data/train.csv",
    ] {
        assert!(dir.join(f).exists(), "{f}");
    }
    let before = fs::read(dir.join("teacher/ckpt_1.f64")).unwrap();

    let again = cli(&args);
    assert_eq!(again.status.code(), Some(2));
    assert!(stderr(&again).contains("--force"), "{}", stderr(&again));

    let forced = cli(&[&args[..], &["--force"]].concat());
    assert!(forced.status.success(), "{}", stderr(&forced));
    assert_eq!(fs::read(dir.join("teacher/ckpt_1.f64")).unwrap(), before);
}

#[test]
fn distill_without_teacher_store_names_it() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", TINY_SINE);
    let out = cli(&[
        "distill",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
        "--method",
        "td",
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("teacher checkpoint store"), "{}", stderr(&out));
}

#[test]
fn scd_aw_without_student_reference_names_the_missing_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", TINY_SINE);
    let root = tmp.path().join("out");
    let (c, r) = (cfg.to_str().unwrap(), root.to_str().unwrap());
    assert!(cli(&["sft", "--config", c, "--out", r, "--seeds", "0"])
        .status
        .success());
    fs::remove_dir_all(root.join("sine/sft/0/student_sft")).unwrap();

    let out = cli(&[
        "distill", "--config", c, "--out", r, "--seeds", "0", "--method", "scd_aw",
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("student SFT reference"), "{}", stderr(&out));
    assert!(!root.join("sine/scd_aw/0").exists());

    let td = cli(&["distill", "--config", c, "--out", r, "--seeds", "0", "--method", "td"]);
    assert!(td.status.success(), "{}", stderr(&td));
}

#[test]
fn unknown_method_is_a_usage_error() {
    let out = cli(&["distill", "--config", "x.json", "--method", "kd"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("scd_aw"));
}

#[test]
fn diverging_training_exits_4_and_marks_the_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let text = TINY_SINE.replace(
        r#""sft": {"epochs": 2, "n_checkpoints": 4}"#,
        r#""sft": {"epochs": 2, "n_checkpoints": 4, "peak_lr": 1e300, "adamw": {"grad_clip_norm": 1e308}}"#,
    );
    assert_ne!(text, TINY_SINE);
    let cfg = write_config(tmp.path(), "c.json", &text);
    let out = cli(&[
        "sft",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
        "--seeds",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(4), "{}", stderr(&out));
    let manifest = RunManifest::read(&tmp.path().join("sine/sft/0")).unwrap().unwrap();
    assert_eq!(manifest.stages["sft"].status, StageState::Diverged);
    assert!(!manifest.is_complete());
}

#[test]
fn report_on_empty_root_is_a_missing_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let out = cli(&["report", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}

mod common;

use std::fs;
use std::path::Path;

use distill_lab::data::TaskData;
use distill_lab::store_io::{
    load_model, load_store, load_store_for, save_model, save_store, StoreError, MANIFEST_FILE,
};
use distill_lab_core::checkpoints::{train_sft, CheckpointStore};
use distill_lab_core::rng::Stream;

fn small_store() -> CheckpointStore {
    let cfg = common::tiny_config();
    let data = TaskData::generate(&cfg.task, 3, cfg.schedule_eval_size).unwrap();
    let spec = cfg.student.model_spec(&cfg.task).unwrap();
    train_sft(
        &spec,
        &data.train,
        &data.val,
        &cfg.sft,
        3,
        Stream::StudentInit,
        Stream::StudentSftBatches,
    )
    .unwrap()
}

fn read_all(dir: &Path) -> Vec<(std::path::PathBuf, Vec<u8>)> {
    common::tree(dir)
        .into_iter()
        .map(|p| {
            let bytes = fs::read(dir.join(&p)).unwrap();
            (p, bytes)
        })
        .collect()
}

fn edit_manifest(dir: &Path, f: impl FnOnce(&mut serde_json::Value)) {
    let path = dir.join(MANIFEST_FILE);
    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    f(&mut v);
    fs::write(&path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
}

#[test]
fn save_load_save_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let store = small_store();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    save_store(&store, &a).unwrap();
    let loaded = load_store(&a).unwrap();
    assert_eq!(loaded, store);
    save_store(&loaded, &b).unwrap();
    let (fa, fb) = (read_all(&a), read_all(&b));
    assert_eq!(fa.len(), store.len() + 1);
    assert_eq!(fa, fb);
}

#[test]
fn every_single_byte_payload_corruption_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let store = small_store();
    let dir = tmp.path().join("s");
    save_store(&store, &dir).unwrap();
    let mut checked = 0;
    for c in store.checkpoints() {
        let path = dir.join(format!("ckpt_{}.f64", c.id));
        let clean = fs::read(&path).unwrap();
        for pos in 0..clean.len() {
            for mask in [0x01u8, 0x80, 0xff] {
                let mut bad = clean.clone();
                bad[pos] ^= mask;
                fs::write(&path, &bad).unwrap();
                match load_store(&dir) {
                    Err(StoreError::Checksum { .. }) => checked += 1,
                    other => panic!("byte {pos} of {} with mask {mask:#x}: {other:?}", path.display()),
                }
            }
        }
        fs::write(&path, &clean).unwrap();
    }
    assert!(checked > 0);
    assert_eq!(load_store(&dir).unwrap(), store);
}

#[test]
fn truncated_and_extended_payloads_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("s");
    save_store(&small_store(), &dir).unwrap();
    let path = dir.join("ckpt_2.f64");
    let clean = fs::read(&path).unwrap();
    fs::write(&path, &clean[..clean.len() - 1]).unwrap();
    assert!(matches!(load_store(&dir), Err(StoreError::Truncated { .. })));
    let mut longer = clean.clone();
    longer.extend_from_slice(&[0; 8]);
    fs::write(&path, &longer).unwrap();
    assert!(matches!(load_store(&dir), Err(StoreError::Truncated { .. })));
    fs::remove_file(&path).unwrap();
    assert!(matches!(load_store(&dir), Err(StoreError::Io { .. })));
}

#[test]
fn version_mismatch_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("s");
    save_store(&small_store(), &dir).unwrap();
    edit_manifest(&dir, |v| v["schema"] = "ckptstore/2".into());
    let err = load_store(&dir).unwrap_err();
    assert!(matches!(err, StoreError::Version { .. }), "{err}");
    assert!(err.to_string().contains("ckptstore/2"));
}

#[test]
fn store_with_fewer_than_two_checkpoints_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("s");
    save_store(&small_store(), &dir).unwrap();
    edit_manifest(&dir, |v| {
        let cps = v["checkpoints"].as_array_mut().unwrap();
        cps.truncate(1);
        v["n_checkpoints"] = 1.into();
        v["best_id"] = 1.into();
    });
    assert!(matches!(load_store(&dir), Err(StoreError::Invalid { .. })));
}

#[test]
fn count_mismatch_and_unknown_fields_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("s");
    save_store(&small_store(), &dir).unwrap();
    edit_manifest(&dir, |v| v["n_checkpoints"] = 9.into());
    assert!(matches!(load_store(&dir), Err(StoreError::Invalid { .. })));
    edit_manifest(&dir, |v| {
        v["n_checkpoints"] = 4.into();
        v["extra"] = true.into();
    });
    let err = load_store(&dir).unwrap_err();
    assert!(matches!(err, StoreError::Manifest { .. }), "{err}");
    assert!(err.to_string().contains("extra"));
}

#[test]
fn fingerprint_mismatch_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let store = small_store();
    let dir = tmp.path().join("s");
    save_store(&store, &dir).unwrap();
    let (t, v) = (store.train_fingerprint(), store.val_fingerprint());
    assert!(load_store_for(&dir, t, v).is_ok());
    match load_store_for(&dir, t ^ 1, v) {
        Err(StoreError::Fingerprint { what, .. }) => assert_eq!(what, "training set"),
        other => panic!("{other:?}"),
    }
    match load_store_for(&dir, t, v.wrapping_add(1)) {
        Err(StoreError::Fingerprint { what, .. }) => assert_eq!(what, "validation set"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn single_model_container_round_trips_and_detects_corruption() {
    let tmp = tempfile::tempdir().unwrap();
    let model = small_store().best().model.clone();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    save_model(&model, "best_student", &a).unwrap();
    let (loaded, label) = load_model(&a).unwrap();
    assert_eq!((loaded.clone(), label.as_str()), (model, "best_student"));
    save_model(&loaded, &label, &b).unwrap();
    assert_eq!(read_all(&a), read_all(&b));
    let path = a.join("model.f64");
    let mut bytes = fs::read(&path).unwrap();
    bytes[5] ^= 0x10;
    fs::write(&path, bytes).unwrap();
    assert!(matches!(load_model(&a), Err(StoreError::Checksum { .. })));
    assert!(matches!(load_store(&b), Err(StoreError::Version { .. })));
}

//! On-disk containers for checkpoint stores and single models.
//!
//! A container is a directory holding `manifest.json` plus one payload file per model.
//! Payloads are the model parameters as little-endian `f64`, layer by layer, each layer's
//! row-major `(out, in)` weight matrix followed by its biases. The manifest records the
//! architecture, per-payload byte length and CRC32, and for stores the training
//! metadata of every checkpoint.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use distill_lab_core::checkpoints::{Checkpoint, CheckpointStore, SftConfig};
use distill_lab_core::nn::{Activation, MlpModel, ModelSpec};
use serde::{Deserialize, Serialize};

pub const STORE_SCHEMA: &str = "ckptstore/1";
pub const MODEL_SCHEMA: &str = "model/1";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const MODEL_PAYLOAD: &str = "model.f64";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed manifest: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error("{path}: unsupported container version {found:?} (expected {expected:?})")]
    Version {
        path: PathBuf,
        found: String,
        expected: &'static str,
    },
    #[error("{path}: truncated payload: expected {expected} bytes, found {found}")]
    Truncated { path: PathBuf, expected: u64, found: u64 },
    #[error("{path}: checksum mismatch: manifest says {expected:08x}, payload hashes to {found:08x}")]
    Checksum { path: PathBuf, expected: u32, found: u32 },
    #[error("{what} fingerprint mismatch: store was built on {stored:016x}, data is {actual:016x}")]
    Fingerprint {
        what: &'static str,
        stored: u64,
        actual: u64,
    },
    #[error("{path}: invalid store: {message}")]
    Invalid { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PayloadEntry {
    file: String,
    bytes: u64,
    crc32: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointEntry {
    id: usize,
    step: usize,
    epoch: f64,
    val_risk: f64,
    val_accuracy: f64,
    payload: PayloadEntry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StoreManifest {
    schema: String,
    layer_sizes: Vec<usize>,
    activation: Activation,
    n_checkpoints: usize,
    best_id: usize,
    train_fingerprint: String,
    val_fingerprint: String,
    config: SftConfig,
    checkpoints: Vec<CheckpointEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelManifest {
    schema: String,
    layer_sizes: Vec<usize>,
    activation: Activation,
    label: String,
    payload: PayloadEntry,
}

pub fn payload_bytes(model: &MlpModel) -> Vec<u8> {
    model.flatten().iter().flat_map(|x| x.to_le_bytes()).collect()
}

fn hex_u64(x: u64) -> String {
    format!("{x:016x}")
}

fn parse_hex_u64(manifest: &Path, s: &str) -> Result<u64, StoreError> {
    u64::from_str_radix(s, 16).map_err(|_| StoreError::Manifest {
        path: manifest.to_path_buf(),
        message: format!("bad fingerprint {s:?}"),
    })
}

fn write_payload(dir: &Path, file: &str, model: &MlpModel) -> Result<PayloadEntry, StoreError> {
    let bytes = payload_bytes(model);
    let path = dir.join(file);
    fs::write(&path, &bytes).map_err(io_err(&path))?;
    Ok(PayloadEntry {
        file: file.to_string(),
        bytes: bytes.len() as u64,
        crc32: format!("{:08x}", crc32fast::hash(&bytes)),
    })
}

fn read_payload(
    dir: &Path,
    entry: &PayloadEntry,
    expected_file: &str,
    spec: &ModelSpec,
) -> Result<MlpModel, StoreError> {
    let manifest = dir.join(MANIFEST_FILE);
    if entry.file != expected_file {
        return Err(StoreError::Manifest {
            path: manifest,
            message: format!("payload file {:?} should be named {expected_file:?}", entry.file),
        });
    }
    let path = dir.join(&entry.file);
    let bytes = fs::read(&path).map_err(io_err(&path))?;
    let want = spec.param_count() as u64 * 8;
    if entry.bytes != want {
        return Err(StoreError::Manifest {
            path: manifest,
            message: format!(
                "{} declares {} bytes but the architecture needs {want}",
                entry.file, entry.bytes
            ),
        });
    }
    if bytes.len() as u64 != want {
        return Err(StoreError::Truncated {
            path,
            expected: want,
            found: bytes.len() as u64,
        });
    }
    let expected = u32::from_str_radix(&entry.crc32, 16).map_err(|_| StoreError::Manifest {
        path: manifest.clone(),
        message: format!("bad checksum field {:?}", entry.crc32),
    })?;
    let found = crc32fast::hash(&bytes);
    if found != expected {
        return Err(StoreError::Checksum { path, expected, found });
    }
    let flat: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunks of 8")))
        .collect();
    MlpModel::from_flat(spec, &flat).map_err(|e| StoreError::Invalid {
        path: manifest,
        message: e.to_string(),
    })
}

/// Writes `value` as pretty JSON with a trailing newline, through a temporary file.
pub(crate) fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<(), StoreError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| StoreError::Manifest {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    text.push('\n');
    let tmp = path.with_extension("json.tmp");
    {
        let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(text.as_bytes()).map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))
}

/// Parses a manifest, checking the schema tag before anything else.
fn read_manifest<T: for<'de> Deserialize<'de>>(dir: &Path, expected: &'static str) -> Result<T, StoreError> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let malformed = |message: String| StoreError::Manifest {
        path: path.clone(),
        message,
    };
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| malformed(e.to_string()))?;
    let found = value
        .get("schema")
        .and_then(|s| s.as_str())
        .ok_or_else(|| malformed("no schema field".into()))?;
    if found != expected {
        return Err(StoreError::Version {
            path,
            found: found.to_string(),
            expected,
        });
    }
    serde_path_to_error::deserialize(value).map_err(|e| malformed(e.to_string()))
}

fn spec_from(path: &Path, layer_sizes: Vec<usize>, activation: Activation) -> Result<ModelSpec, StoreError> {
    ModelSpec::new(layer_sizes, activation).map_err(|e| StoreError::Invalid {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn save_store(store: &CheckpointStore, dir: &Path) -> Result<(), StoreError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let spec = store.spec();
    let checkpoints = store
        .checkpoints()
        .iter()
        .map(|c| {
            Ok(CheckpointEntry {
                id: c.id,
                step: c.step,
                epoch: c.epoch,
                val_risk: c.val_risk,
                val_accuracy: c.val_accuracy,
                payload: write_payload(dir, &format!("ckpt_{}.f64", c.id), &c.model)?,
            })
        })
        .collect::<Result<Vec<_>, StoreError>>()?;
    let manifest = StoreManifest {
        schema: STORE_SCHEMA.to_string(),
        layer_sizes: spec.layer_sizes.clone(),
        activation: spec.activation,
        n_checkpoints: store.len(),
        best_id: store.best_id(),
        train_fingerprint: hex_u64(store.train_fingerprint()),
        val_fingerprint: hex_u64(store.val_fingerprint()),
        config: *store.config(),
        checkpoints,
    };
    write_json_atomic(&dir.join(MANIFEST_FILE), &manifest)
}

pub fn load_store(dir: &Path) -> Result<CheckpointStore, StoreError> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let m: StoreManifest = read_manifest(dir, STORE_SCHEMA)?;
    let invalid = |message: String| StoreError::Invalid {
        path: manifest_path.clone(),
        message,
    };
    if m.n_checkpoints < 2 || m.checkpoints.len() < 2 {
        return Err(invalid(format!(
            "a store needs at least 2 checkpoints, manifest lists {}",
            m.checkpoints.len()
        )));
    }
    if m.checkpoints.len() != m.n_checkpoints {
        return Err(invalid(format!(
            "n_checkpoints is {} but {} entries are listed",
            m.n_checkpoints,
            m.checkpoints.len()
        )));
    }
    let spec = spec_from(&manifest_path, m.layer_sizes, m.activation)?;
    let checkpoints = m
        .checkpoints
        .iter()
        .map(|e| {
            Ok(Checkpoint {
                id: e.id,
                step: e.step,
                epoch: e.epoch,
                val_risk: e.val_risk,
                val_accuracy: e.val_accuracy,
                model: read_payload(dir, &e.payload, &format!("ckpt_{}.f64", e.id), &spec)?,
            })
        })
        .collect::<Result<Vec<_>, StoreError>>()?;
    let train_fp = parse_hex_u64(&manifest_path, &m.train_fingerprint)?;
    let val_fp = parse_hex_u64(&manifest_path, &m.val_fingerprint)?;
    CheckpointStore::new(checkpoints, m.best_id, train_fp, val_fp, m.config).map_err(|e| invalid(e.to_string()))
}

/// Loads a store and checks it was trained on the given train/validation data.
pub fn load_store_for(dir: &Path, train_fingerprint: u64, val_fingerprint: u64) -> Result<CheckpointStore, StoreError> {
    let store = load_store(dir)?;
    for (what, stored, actual) in [
        ("training set", store.train_fingerprint(), train_fingerprint),
        ("validation set", store.val_fingerprint(), val_fingerprint),
    ] {
        if stored != actual {
            return Err(StoreError::Fingerprint { what, stored, actual });
        }
    }
    Ok(store)
}

pub fn save_model(model: &MlpModel, label: &str, dir: &Path) -> Result<(), StoreError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let spec = model.spec();
    let manifest = ModelManifest {
        schema: MODEL_SCHEMA.to_string(),
        layer_sizes: spec.layer_sizes.clone(),
        activation: spec.activation,
        label: label.to_string(),
        payload: write_payload(dir, MODEL_PAYLOAD, model)?,
    };
    write_json_atomic(&dir.join(MANIFEST_FILE), &manifest)
}

/// Returns the model and the label it was saved with.
pub fn load_model(dir: &Path) -> Result<(MlpModel, String), StoreError> {
    let m: ModelManifest = read_manifest(dir, MODEL_SCHEMA)?;
    let spec = spec_from(&dir.join(MANIFEST_FILE), m.layer_sizes, m.activation)?;
    let model = read_payload(dir, &m.payload, MODEL_PAYLOAD, &spec)?;
    Ok((model, m.label))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hex_roundtrip() {
        let p = Path::new("m");
        for x in [0u64, 1, u64::MAX, 0xdead_beef_0000_0001] {
            assert_eq!(parse_hex_u64(p, &hex_u64(x)).unwrap(), x);
        }
        assert!(parse_hex_u64(p, "xyz").is_err());
    }

    #[test]
    fn payload_layout_is_little_endian_weights_then_biases() {
        let spec = ModelSpec::new(vec![1, 2], Activation::Relu).unwrap();
        let m = MlpModel::from_flat(&spec, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let bytes = payload_bytes(&m);
        assert_eq!(bytes.len(), 32);
        assert_eq!(&bytes[..8], &1.0f64.to_le_bytes());
        assert_eq!(&bytes[24..], &4.0f64.to_le_bytes());
    }
}

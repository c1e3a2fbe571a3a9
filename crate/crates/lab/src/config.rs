//! Experiment configuration.
//!
//! A config file is JSON. Only `task.kind` is required: every other field falls back to
//! the preset for that task, and nested objects may be given partially. Unknown keys are
//! rejected, and errors name the offending field path.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use distill_lab_core::checkpoints::SftConfig;
use distill_lab_core::distill::{DistillConfig, InitFrom, Method, TaidSchedule};
use distill_lab_core::nn::{Activation, ModelSpec};
use distill_lab_core::optim::AdamWConfig;
use distill_lab_core::tasks::ReverseCopyParams;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{LabError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskSpec {
    Sine {
        n_train: usize,
        n_val: usize,
        n_test: usize,
    },
    ReverseCopy {
        vocab_size: usize,
        max_prefix: usize,
        n_train: usize,
        n_val: usize,
        n_test: usize,
    },
}

impl TaskSpec {
    pub fn name(&self) -> &'static str {
        match self {
            TaskSpec::Sine { .. } => "sine",
            TaskSpec::ReverseCopy { .. } => "reverse_copy",
        }
    }

    pub fn sizes(&self) -> (usize, usize, usize) {
        match *self {
            TaskSpec::Sine { n_train, n_val, n_test } => (n_train, n_val, n_test),
            TaskSpec::ReverseCopy {
                n_train, n_val, n_test, ..
            } => (n_train, n_val, n_test),
        }
    }

    /// Model input width and number of output classes.
    pub fn io_dims(&self) -> (usize, usize) {
        match *self {
            TaskSpec::Sine { .. } => (2, 2),
            TaskSpec::ReverseCopy {
                vocab_size, max_prefix, ..
            } => {
                let p = ReverseCopyParams { vocab_size, max_prefix };
                (p.context_window() * vocab_size, vocab_size)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetSpec {
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl NetSpec {
    pub fn model_spec(&self, task: &TaskSpec) -> Result<ModelSpec> {
        let (d_in, d_out) = task.io_dims();
        let mut sizes = vec![d_in];
        sizes.extend(&self.hidden);
        sizes.push(d_out);
        Ok(ModelSpec::new(sizes, self.activation)?)
    }
}

/// Distillation settings shared by all methods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistillParams {
    pub alpha: f64,
    pub phase_steps: usize,
    pub n_phases: Option<usize>,
    pub peak_lr: f64,
    pub warmup_ratio: f64,
    pub adamw: AdamWConfig,
    pub batch_size: usize,
    pub eval_every: usize,
    pub hard_aw_tau: f64,
    pub taid: TaidSchedule,
    pub init_from: InitFrom,
}

/// Per-method replacements for [`DistillParams`] fields.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistillOverrides {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phase_steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub peak_lr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warmup_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hard_aw_tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub taid: Option<TaidSchedule>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: TaskSpec,
    /// Seed for dataset generation; each run's own seed when absent.
    pub data_seed: Option<u64>,
    pub teacher: NetSpec,
    pub student: NetSpec,
    /// Teacher supervised training; its checkpoints feed every distillation method.
    pub sft: SftConfig,
    /// Supervised training of the student reference used by adaptive weighting.
    pub student_sft: SftConfig,
    pub distill: DistillParams,
    pub method_overrides: BTreeMap<Method, DistillOverrides>,
    /// Validation samples frozen for checkpoint scheduling.
    pub schedule_eval_size: usize,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    pub output_root: PathBuf,
}

pub const DEFAULT_METHODS: [Method; 6] = [
    Method::Td,
    Method::Rkl,
    Method::Taid,
    Method::Cd,
    Method::Scd,
    Method::ScdAw,
];

impl ExperimentConfig {
    pub fn preset(task_kind: &str) -> Option<Self> {
        let sft = SftConfig {
            epochs: 16,
            batch_size: 8,
            n_checkpoints: 8,
            peak_lr: 1e-3,
            warmup_ratio: 0.1,
            adamw: AdamWConfig::default(),
        };
        let distill = DistillParams {
            alpha: 0.5,
            phase_steps: 250,
            n_phases: None,
            peak_lr: 3e-2,
            warmup_ratio: 0.1,
            adamw: AdamWConfig::default(),
            batch_size: 8,
            eval_every: 50,
            hard_aw_tau: 0.0,
            taid: TaidSchedule::default(),
            init_from: InitFrom::Scratch,
        };
        let base = |task, teacher_hidden: Vec<usize>, student_hidden: Vec<usize>, sft, distill| Self {
            task,
            data_seed: None,
            teacher: NetSpec {
                hidden: teacher_hidden,
                activation: Activation::Relu,
            },
            student: NetSpec {
                hidden: student_hidden,
                activation: Activation::Relu,
            },
            sft,
            student_sft: sft,
            distill,
            method_overrides: BTreeMap::new(),
            schedule_eval_size: 256,
            methods: DEFAULT_METHODS.to_vec(),
            seeds: (0..5).collect(),
            output_root: PathBuf::from("runs"),
        };
        match task_kind {
            // 1000 samples at batch 8 are 125 steps per epoch; T covers two epochs.
            "sine" => Some(base(
                TaskSpec::Sine {
                    n_train: 1000,
                    n_val: 500,
                    n_test: 1000,
                },
                vec![128, 128],
                vec![8],
                SftConfig { epochs: 4, ..sft },
                distill,
            )),
            "reverse_copy" => Some(base(
                TaskSpec::ReverseCopy {
                    vocab_size: 16,
                    max_prefix: 6,
                    n_train: 2000,
                    n_val: 500,
                    n_test: 500,
                },
                vec![128, 128],
                vec![16],
                sft,
                DistillParams {
                    phase_steps: 500,
                    peak_lr: 1e-1,
                    ..distill
                },
            )),
            _ => None,
        }
    }

    /// Parses a config document, filling absent fields from the task preset.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let user: Value = serde_json::from_str(text).map_err(|e| LabError::Config(format!("invalid JSON: {e}")))?;
        let preset = user
            .get("task")
            .and_then(|t| t.get("kind"))
            .and_then(Value::as_str)
            .and_then(Self::preset);
        let merged = match preset {
            Some(p) => {
                let mut base = serde_json::to_value(p).expect("presets serialize");
                merge(&mut base, user);
                base
            }
            None => user,
        };
        let cfg: Self = serde_path_to_error::deserialize(merged).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            if path == "." {
                LabError::Config(inner.to_string())
            } else {
                LabError::Config(format!("{path}: {inner}"))
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json_str(&text).map_err(|e| match e {
            LabError::Config(msg) => LabError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let (n_train, n_val, n_test) = self.task.sizes();
        if n_train == 0 || n_val == 0 || n_test == 0 {
            return Err(LabError::Config("task split sizes must be positive".into()));
        }
        if let TaskSpec::ReverseCopy {
            vocab_size, max_prefix, ..
        } = self.task
        {
            ReverseCopyParams { vocab_size, max_prefix }.validate()?;
        }
        self.teacher.model_spec(&self.task)?;
        self.student.model_spec(&self.task)?;
        self.sft.validate()?;
        self.student_sft.validate()?;
        if self.schedule_eval_size == 0 || self.schedule_eval_size > n_val {
            return Err(LabError::Config(format!(
                "schedule_eval_size must be in 1..={n_val}, got {}",
                self.schedule_eval_size
            )));
        }
        if self.seeds.is_empty() {
            return Err(LabError::Config("seeds must not be empty".into()));
        }
        if self.methods.is_empty() {
            return Err(LabError::Config("methods must not be empty".into()));
        }
        for &m in Method::ALL.iter() {
            self.distill_config(m, 0).validate()?;
        }
        Ok(())
    }

    pub fn data_seed(&self, run_seed: u64) -> u64 {
        self.data_seed.unwrap_or(run_seed)
    }

    /// Fully resolved distillation settings for one method and seed.
    pub fn distill_config(&self, method: Method, seed: u64) -> DistillConfig {
        let d = &self.distill;
        let o = self.method_overrides.get(&method).copied().unwrap_or_default();
        DistillConfig {
            method,
            alpha: o.alpha.unwrap_or(d.alpha),
            phase_steps: o.phase_steps.unwrap_or(d.phase_steps),
            n_phases: d.n_phases,
            peak_lr: o.peak_lr.unwrap_or(d.peak_lr),
            warmup_ratio: o.warmup_ratio.unwrap_or(d.warmup_ratio),
            adamw: d.adamw,
            batch_size: d.batch_size,
            eval_every: d.eval_every,
            hard_aw_tau: o.hard_aw_tau.unwrap_or(d.hard_aw_tau),
            taid: o.taid.unwrap_or(d.taid),
            init_from: d.init_from,
            seed,
        }
    }

    pub fn to_pretty_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("configs serialize");
        s.push('\n');
        s
    }

    /// Canonical description of everything the supervised stage depends on.
    pub fn sft_identity(&self, seed: u64) -> Value {
        serde_json::json!({
            "task": self.task,
            "data_seed": self.data_seed(seed),
            "teacher": self.teacher,
            "student": self.student,
            "sft": self.sft,
            "student_sft": self.student_sft,
            "seed": seed,
        })
    }

    /// Canonical description of everything one distillation run depends on.
    pub fn distill_identity(&self, method: Method, seed: u64) -> Value {
        serde_json::json!({
            "sft": self.sft_identity(seed),
            "distill": self.distill_config(method, seed),
            "schedule_eval_size": self.schedule_eval_size,
        })
    }
}

/// Recursively overlays `top` onto `base`; non-object values replace.
fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, top) => *slot = top,
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-256 of the compact JSON rendering of `value`.
pub fn value_hash(value: &Value) -> String {
    sha256_hex(serde_json::to_string(value).expect("values serialize").as_bytes())
}

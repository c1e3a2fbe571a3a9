//! Pipeline stages and the output directory layout.
//!
//! ```text
//! <root>/<task>/sft/<seed>/            teacher/ and student_sft/ checkpoint stores, data/
//! <root>/<task>/<method>/<seed>/       run_log.jsonl, final_student/, best_student/, ...
//! ```
//!
//! Every stage directory carries `run_manifest.json` and `config.resolved.json`.

use std::fs;
use std::path::{Path, PathBuf};

use distill_lab_core::checkpoints::{train_sft, CheckpointStore};
use distill_lab_core::distill::{run, DistillInputs, InitFrom, Method, RunOutput};
use distill_lab_core::rng::Stream;
use distill_lab_core::Error as CoreError;
use rayon::prelude::*;

use crate::config::{value_hash, ExperimentConfig};
use crate::data::TaskData;
use crate::emit;
use crate::error::{LabError, Result};
use crate::manifest::{inputs_hash, prepare_run_dir, RunManifest, StageState, RESOLVED_CONFIG_FILE};
use crate::runlog::{write_run_log, RUN_LOG_FILE};
use crate::store_io::{load_model, load_store_for, save_model, save_store, MANIFEST_FILE};

pub const TEACHER_DIR: &str = "teacher";
pub const STUDENT_SFT_DIR: &str = "student_sft";
pub const FINAL_STUDENT_DIR: &str = "final_student";
pub const BEST_STUDENT_DIR: &str = "best_student";
pub const AW_TABLE_FILE: &str = "aw_table.csv";
pub const THREADS_ENV: &str = "DISTILL_LAB_THREADS";

pub fn sft_dir(root: &Path, task: &str, seed: u64) -> PathBuf {
    root.join(task).join("sft").join(seed.to_string())
}

pub fn run_dir(root: &Path, task: &str, method: Method, seed: u64) -> PathBuf {
    root.join(task).join(method.name()).join(seed.to_string())
}

fn write_resolved_config(cfg: &ExperimentConfig, dir: &Path) -> Result<PathBuf> {
    let path = dir.join(RESOLVED_CONFIG_FILE);
    fs::write(&path, cfg.to_pretty_json()).map_err(|e| LabError::io(format!("writing {}", path.display()), e))?;
    Ok(path)
}

/// Records the outcome of a stage in its manifest and passes the result through.
fn conclude<T>(manifest: &mut RunManifest, stage: &str, dir: &Path, result: Result<T>) -> Result<T> {
    let (state, message) = match &result {
        Ok(_) => (StageState::Ok, None),
        Err(LabError::Divergence(m)) => (StageState::Diverged, Some(m.clone())),
        Err(e) => (StageState::Failed, Some(e.to_string())),
    };
    manifest.finish(stage, state, message);
    manifest.write(dir)?;
    result
}

/// Trains and saves one supervised store. On divergence the last good checkpoint is
/// saved next to where the store would have gone.
fn train_store(cfg: &ExperimentConfig, data: &TaskData, seed: u64, which: &str, dir: &Path) -> Result<CheckpointStore> {
    let (net, sft, init, batches) = match which {
        TEACHER_DIR => (&cfg.teacher, &cfg.sft, Stream::TeacherInit, Stream::TeacherBatches),
        _ => (
            &cfg.student,
            &cfg.student_sft,
            Stream::StudentInit,
            Stream::StudentSftBatches,
        ),
    };
    let spec = net.model_spec(&cfg.task)?;
    match train_sft(&spec, &data.train, &data.val, sft, seed, init, batches) {
        Ok(store) => {
            save_store(&store, &dir.join(which))?;
            Ok(store)
        }
        Err(CoreError::Diverged { step, last_good }) => {
            let mut msg = format!("{which} training diverged at step {step}");
            if let Some(ckpt) = last_good {
                let keep = dir.join(format!("{which}_last_good"));
                save_model(
                    &ckpt.model,
                    &format!("{which} checkpoint {} (last good)", ckpt.id),
                    &keep,
                )?;
                msg.push_str(&format!(
                    "; last good checkpoint {} kept in {}",
                    ckpt.id,
                    keep.display()
                ));
            }
            Err(LabError::Divergence(msg))
        }
        Err(e) => Err(e.into()),
    }
}

/// Supervised stage for one seed: teacher store and student reference store.
pub fn sft_seed(cfg: &ExperimentConfig, root: &Path, seed: u64, force: bool) -> Result<PathBuf> {
    let dir = sft_dir(root, cfg.task.name(), seed);
    let hash = value_hash(&cfg.sft_identity(seed));
    prepare_run_dir(&dir, &hash, force)?;
    let config_path = write_resolved_config(cfg, &dir)?;
    let mut manifest = RunManifest::start("sft", hash, inputs_hash(&[(RESOLVED_CONFIG_FILE.into(), config_path)])?);
    manifest.write(&dir)?;
    let result = (|| {
        let data = TaskData::generate(&cfg.task, cfg.data_seed(seed), cfg.schedule_eval_size)?;
        data.export(&dir.join("data"))?;
        train_store(cfg, &data, seed, TEACHER_DIR, &dir)?;
        train_store(cfg, &data, seed, STUDENT_SFT_DIR, &dir)?;
        Ok(())
    })();
    conclude(&mut manifest, "sft", &dir, result)?;
    Ok(dir)
}

/// Whether `dir` holds a completed supervised stage matching `cfg` and `seed`.
fn sft_is_current(cfg: &ExperimentConfig, dir: &Path, seed: u64) -> Result<bool> {
    Ok(match RunManifest::read(dir)? {
        Some(m) => m.is_complete() && m.config_hash == value_hash(&cfg.sft_identity(seed)),
        None => false,
    })
}

/// Loaded supervised artifacts for one seed.
pub struct SftArtifacts {
    pub data: TaskData,
    pub teacher: CheckpointStore,
    pub student_sft: Option<CheckpointStore>,
    /// Manifest files of the loaded stores, for input hashing.
    pub manifests: Vec<(String, PathBuf)>,
}

pub fn load_sft(cfg: &ExperimentConfig, root: &Path, seed: u64, need_student: bool) -> Result<SftArtifacts> {
    let dir = sft_dir(root, cfg.task.name(), seed);
    let teacher_dir = dir.join(TEACHER_DIR);
    if !teacher_dir.join(MANIFEST_FILE).exists() {
        return Err(LabError::missing("teacher checkpoint store", &teacher_dir));
    }
    if let Some(m) = RunManifest::read(&dir)? {
        if m.config_hash != value_hash(&cfg.sft_identity(seed)) {
            return Err(LabError::Config(format!(
                "{} was produced by a different supervised configuration; rerun `sft` with --force",
                dir.display()
            )));
        }
    }
    let data = TaskData::generate(&cfg.task, cfg.data_seed(seed), cfg.schedule_eval_size)?;
    let (train_fp, val_fp) = (data.train.fingerprint(), data.val.fingerprint());
    let teacher = load_store_for(&teacher_dir, train_fp, val_fp)?;
    let mut manifests = vec![("teacher/manifest.json".to_string(), teacher_dir.join(MANIFEST_FILE))];
    let student_dir = dir.join(STUDENT_SFT_DIR);
    let student_sft = if need_student {
        if !student_dir.join(MANIFEST_FILE).exists() {
            return Err(LabError::missing("student SFT reference", &student_dir));
        }
        manifests.push(("student_sft/manifest.json".to_string(), student_dir.join(MANIFEST_FILE)));
        Some(load_store_for(&student_dir, train_fp, val_fp)?)
    } else {
        None
    };
    Ok(SftArtifacts {
        data,
        teacher,
        student_sft,
        manifests,
    })
}

/// Runs one method in memory on loaded artifacts.
pub fn distill_in_memory(cfg: &ExperimentConfig, method: Method, seed: u64, art: &SftArtifacts) -> Result<RunOutput> {
    let dcfg = cfg.distill_config(method, seed);
    let student_spec = cfg.student.model_spec(&cfg.task)?;
    let inputs = DistillInputs {
        teacher: &art.teacher,
        student_spec: &student_spec,
        student_sft: art.student_sft.as_ref().map(|s| &s.best().model),
        train: &art.data.train,
        schedule_eval: &art.data.schedule_eval,
        test: &art.data.test,
    };
    Ok(run(&dcfg, &inputs)?)
}

fn needs_student(cfg: &ExperimentConfig, method: Method) -> bool {
    method.needs_student_reference() || cfg.distill_config(method, 0).init_from == InitFrom::StudentSft
}

/// One distillation run, written to its run directory.
pub fn distill_seed(cfg: &ExperimentConfig, root: &Path, method: Method, seed: u64, force: bool) -> Result<PathBuf> {
    let art = load_sft(cfg, root, seed, needs_student(cfg, method))?;
    let dir = run_dir(root, cfg.task.name(), method, seed);
    let hash = value_hash(&cfg.distill_identity(method, seed));
    prepare_run_dir(&dir, &hash, force)?;
    let config_path = write_resolved_config(cfg, &dir)?;
    let mut inputs = art.manifests.clone();
    inputs.push((RESOLVED_CONFIG_FILE.into(), config_path));
    let mut manifest = RunManifest::start("distill", hash, inputs_hash(&inputs)?);
    manifest.write(&dir)?;
    let result = (|| {
        let out = distill_in_memory(cfg, method, seed, &art)?;
        write_run_log(&dir.join(RUN_LOG_FILE), &out.log, seed)?;
        save_model(&out.final_student, "final_student", &dir.join(FINAL_STUDENT_DIR))?;
        save_model(&out.best_student, "best_student", &dir.join(BEST_STUDENT_DIR))?;
        if let Some(table) = &out.aw_table {
            emit::aw_table_csv(&dir.join(AW_TABLE_FILE), table)?;
        }
        Ok(())
    })();
    conclude(&mut manifest, "distill", &dir, result)?;
    Ok(dir)
}

/// Worker count for matrix runs: `DISTILL_LAB_THREADS` when set, else the core count.
pub fn thread_count() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(LabError::Config(format!(
                "{THREADS_ENV} must be a positive integer, got {v:?}"
            ))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)),
    }
}

pub fn cmd_sft(cfg: &ExperimentConfig, root: &Path, seeds: &[u64], force: bool) -> Result<Vec<PathBuf>> {
    seeds.iter().map(|&s| sft_seed(cfg, root, s, force)).collect()
}

pub fn cmd_distill(
    cfg: &ExperimentConfig,
    root: &Path,
    method: Method,
    seeds: &[u64],
    force: bool,
) -> Result<Vec<PathBuf>> {
    seeds
        .iter()
        .map(|&s| distill_seed(cfg, root, method, s, force))
        .collect()
}

/// Outcome of one matrix cell.
#[derive(Debug)]
pub struct MatrixCell {
    pub method: Method,
    pub seed: u64,
    /// The cell already held a completed run of the same configuration.
    pub skipped: bool,
    pub result: Result<PathBuf>,
}

fn run_is_current(cfg: &ExperimentConfig, dir: &Path, method: Method, seed: u64) -> Result<bool> {
    Ok(match RunManifest::read(dir)? {
        Some(m) => m.is_complete() && m.config_hash == value_hash(&cfg.distill_identity(method, seed)),
        None => false,
    })
}

/// Supervised stage for every seed that lacks a current one, then every
/// `(method, seed)` pair, in parallel. Cells fail independently; without `force`, cells
/// that already hold a completed run of the same configuration are skipped.
pub fn cmd_matrix(
    cfg: &ExperimentConfig,
    root: &Path,
    methods: &[Method],
    seeds: &[u64],
    force: bool,
    threads: usize,
) -> Result<Vec<MatrixCell>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| LabError::Config(format!("cannot start {threads} workers: {e}")))?;
    pool.install(|| {
        seeds.par_iter().try_for_each(|&seed| {
            let dir = sft_dir(root, cfg.task.name(), seed);
            if force || !sft_is_current(cfg, &dir, seed)? {
                sft_seed(cfg, root, seed, force)?;
            }
            Ok::<_, LabError>(())
        })?;
        let jobs: Vec<(Method, u64)> = methods
            .iter()
            .flat_map(|&m| seeds.iter().map(move |&s| (m, s)))
            .collect();
        Ok(jobs
            .into_par_iter()
            .map(|(method, seed)| {
                let dir = run_dir(root, cfg.task.name(), method, seed);
                match run_is_current(cfg, &dir, method, seed) {
                    Ok(true) if !force => MatrixCell {
                        method,
                        seed,
                        skipped: true,
                        result: Ok(dir),
                    },
                    Err(e) => MatrixCell {
                        method,
                        seed,
                        skipped: false,
                        result: Err(e),
                    },
                    _ => MatrixCell {
                        method,
                        seed,
                        skipped: false,
                        result: distill_seed(cfg, root, method, seed, force),
                    },
                }
            })
            .collect())
    })
}

/// Loads the best student of a finished run.
pub fn load_best_student(dir: &Path) -> Result<distill_lab_core::nn::MlpModel> {
    let path = dir.join(BEST_STUDENT_DIR);
    if !path.join(MANIFEST_FILE).exists() {
        return Err(LabError::missing("best student", &path));
    }
    Ok(load_model(&path)?.0)
}

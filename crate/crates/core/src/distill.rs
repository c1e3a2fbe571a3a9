//! The distillation driver.
//!
//! Every method runs the same protocol: `N` phases of `T` steps, a fresh optimizer and
//! learning-rate schedule at each phase boundary, the same student initialization and the
//! same batch sequence. Methods differ only in which teacher distribution a phase uses and
//! how the distillation and cross-entropy terms are mixed.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::aw::AwTable;
use crate::checkpoints::{evaluate, CheckpointStore};
use crate::error::{Error, Result};
use crate::losses::{prob_table, ProbTable};
use crate::nn::{Gradients, MlpModel, ModelSpec};
use crate::objective::{batch_gradient, BatchSampler, Divergence, LossBreakdown, Objective, SampleWeight};
use crate::optim::{adamw_step, AdamWConfig, LrSchedule, OptimState};
use crate::rng::{self, Stream};
use crate::scheduler::{progressive_id, CheckpointTables, ScheduleDecision};
use crate::tasks::Corpus;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Method {
    /// Ground-truth cross-entropy only, through the distillation protocol.
    SftOnly,
    /// Forward KL to the best checkpoint with no cross-entropy term.
    DistillOnly,
    Td,
    Rkl,
    Taid,
    /// Per-sample three-way switch between distill-only, CE-only and the α-mixture.
    HardAw,
    /// Soft adaptive weights against the best checkpoint.
    Aw,
    Cd,
    Scd,
    ScdAw,
}

impl Method {
    pub const ALL: [Method; 10] = [
        Method::SftOnly,
        Method::DistillOnly,
        Method::Td,
        Method::Rkl,
        Method::Taid,
        Method::HardAw,
        Method::Aw,
        Method::Cd,
        Method::Scd,
        Method::ScdAw,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::SftOnly => "sft_only",
            Method::DistillOnly => "distill_only",
            Method::Td => "td",
            Method::Rkl => "rkl",
            Method::Taid => "taid",
            Method::HardAw => "hard_aw",
            Method::Aw => "aw",
            Method::Cd => "cd",
            Method::Scd => "scd",
            Method::ScdAw => "scd_aw",
        }
    }

    pub fn parse(name: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.name() == name)
    }

    /// Methods that need the frozen student SFT model as a weighting reference.
    pub fn needs_student_reference(self) -> bool {
        matches!(self, Method::HardAw | Method::Aw | Method::ScdAw)
    }

    pub fn is_scheduled(self) -> bool {
        matches!(self, Method::Scd | Method::ScdAw)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum InitFrom {
    #[default]
    Scratch,
    StudentSft,
}

/// Linear ramp of the TAID interpolation weight over the whole run.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TaidSchedule {
    pub start: f64,
    pub end: f64,
}

impl Default for TaidSchedule {
    fn default() -> Self {
        Self { start: 0.0, end: 1.0 }
    }
}

impl TaidSchedule {
    pub fn t_at(&self, global_step: usize, total_steps: usize) -> f64 {
        if total_steps <= 1 {
            return self.end;
        }
        let frac = global_step as f64 / (total_steps - 1) as f64;
        self.start + (self.end - self.start) * frac
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct DistillConfig {
    pub method: Method,
    pub alpha: f64,
    /// `T`: optimizer steps per phase.
    pub phase_steps: usize,
    /// `N`: number of phases; defaults to the number of teacher checkpoints.
    pub n_phases: Option<usize>,
    pub peak_lr: f64,
    pub warmup_ratio: f64,
    pub adamw: AdamWConfig,
    pub batch_size: usize,
    /// Test-set evaluation every this many steps (and always after the last step).
    pub eval_every: usize,
    pub hard_aw_tau: f64,
    pub taid: TaidSchedule,
    pub init_from: InitFrom,
    pub seed: u64,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            method: Method::Td,
            alpha: 0.5,
            phase_steps: 250,
            n_phases: None,
            peak_lr: 1e-2,
            warmup_ratio: 0.1,
            adamw: AdamWConfig::default(),
            batch_size: 8,
            eval_every: 50,
            hard_aw_tau: 0.0,
            taid: TaidSchedule::default(),
            init_from: InitFrom::Scratch,
            seed: 0,
        }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::OutOfRange {
                what: "alpha",
                value: self.alpha,
            });
        }
        if self.phase_steps == 0 || self.batch_size == 0 || self.eval_every == 0 {
            return Err(Error::InvalidConfig(
                "phase_steps, batch_size and eval_every must be positive".into(),
            ));
        }
        if self.n_phases == Some(0) {
            return Err(Error::InvalidConfig("n_phases must be positive".into()));
        }
        if self.hard_aw_tau < 0.0 {
            return Err(Error::OutOfRange {
                what: "hard AW tolerance",
                value: self.hard_aw_tau,
            });
        }
        for t in [self.taid.start, self.taid.end] {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::OutOfRange {
                    what: "TAID schedule endpoint",
                    value: t,
                });
            }
        }
        LrSchedule::new(self.peak_lr, self.phase_steps, self.warmup_ratio)?;
        Ok(())
    }
}

/// What a single step needs besides the student and the batch.
#[derive(Debug, Clone, Copy)]
pub struct StepInputs<'a> {
    pub method: Method,
    pub alpha: f64,
    /// TAID interpolation weight for this step.
    pub taid_t: f64,
    pub hard_aw_tau: f64,
    /// Teacher distributions over the training corpus for the current phase.
    pub teacher: Option<&'a ProbTable>,
    pub aw_table: Option<&'a AwTable>,
}

/// The loss a method optimizes, given the phase teacher and (for AW variants) weights.
///
/// `hard_weights` must hold [`AwTable::hard_weights`] when the method is [`Method::HardAw`].
pub fn method_objective<'a>(inputs: &StepInputs<'a>, hard_weights: Option<&'a [f64]>) -> Result<Objective<'a>> {
    let teacher = || inputs.teacher.ok_or(Error::MissingArtifact("teacher distribution"));
    let aw = || inputs.aw_table.ok_or(Error::MissingArtifact("adaptive weight table"));
    let alpha = SampleWeight::Constant(inputs.alpha);
    let objective = match inputs.method {
        Method::SftOnly => Objective::cross_entropy(),
        Method::DistillOnly => Objective {
            teacher: Some((teacher()?, Divergence::Forward)),
            weight: SampleWeight::Constant(1.0),
        },
        Method::Td | Method::Cd | Method::Scd => Objective {
            teacher: Some((teacher()?, Divergence::Forward)),
            weight: alpha,
        },
        Method::Rkl => Objective {
            teacher: Some((teacher()?, Divergence::Reverse)),
            weight: alpha,
        },
        Method::Taid => Objective {
            teacher: Some((teacher()?, Divergence::Taid { t: inputs.taid_t })),
            weight: alpha,
        },
        Method::Aw | Method::ScdAw => Objective {
            teacher: Some((teacher()?, Divergence::Forward)),
            weight: SampleWeight::PerSample(&aw()?.weights),
        },
        Method::HardAw => {
            aw()?;
            Objective {
                teacher: Some((teacher()?, Divergence::Forward)),
                weight: SampleWeight::PerSample(hard_weights.ok_or(Error::MissingArtifact("hard adaptive weights"))?),
            }
        }
    };
    Ok(objective)
}

/// One optimizer step of `inputs.method` on `batch`.
pub fn distill_step(
    student: &mut MlpModel,
    state: &mut OptimState,
    lr: f64,
    corpus: &Corpus,
    batch: &[usize],
    inputs: &StepInputs<'_>,
) -> Result<LossBreakdown> {
    let hard = match (inputs.method, inputs.aw_table) {
        (Method::HardAw, Some(t)) => Some(t.hard_weights(inputs.hard_aw_tau, inputs.alpha)),
        _ => None,
    };
    let objective = method_objective(inputs, hard.as_deref())?;
    let mut grads = Gradients::zeros_like(student);
    let loss = batch_gradient(student, corpus, batch, &objective, &mut grads)?;
    adamw_step(student, &grads, state, lr)?;
    Ok(loss)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StepRecord {
    pub step: usize,
    pub phase: usize,
    pub teacher_id: usize,
    pub lr: f64,
    pub loss: LossBreakdown,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalRecord {
    /// Optimizer steps completed when the evaluation ran.
    pub step: usize,
    pub test_ce: f64,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PhaseRecord {
    pub phase: usize,
    pub start_step: usize,
    pub teacher_id: usize,
    /// Mean adaptive weight over the training set, for AW methods.
    pub mean_aw: Option<f64>,
    /// Whether the optimizer moments were all zero when the phase's first step ran.
    pub optimizer_reset: bool,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RunLog {
    pub method: Method,
    pub steps: Vec<StepRecord>,
    pub phases: Vec<PhaseRecord>,
    pub decisions: Vec<ScheduleDecision>,
    pub evals: Vec<EvalRecord>,
    /// Evaluation with the highest test accuracy (earliest on ties).
    pub best: EvalRecord,
}

impl RunLog {
    pub fn phase_teachers(&self) -> Vec<usize> {
        self.phases.iter().map(|p| p.teacher_id).collect()
    }

    pub fn total_losses(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.loss.total).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub log: RunLog,
    pub final_student: MlpModel,
    pub best_student: MlpModel,
    /// The adaptive-weight table in force during the last phase, for AW methods.
    pub aw_table: Option<AwTable>,
}

/// Everything a run reads besides its configuration.
#[derive(Debug, Clone, Copy)]
pub struct DistillInputs<'a> {
    pub teacher: &'a CheckpointStore,
    pub student_spec: &'a ModelSpec,
    /// Frozen student SFT model; required by AW methods and by `init_from = student_sft`.
    pub student_sft: Option<&'a MlpModel>,
    pub train: &'a Corpus,
    /// Frozen subset used by the checkpoint scheduler.
    pub schedule_eval: &'a Corpus,
    pub test: &'a Corpus,
}

struct TeacherCache<'a> {
    store: &'a CheckpointStore,
    corpus: &'a Corpus,
    tables: Vec<Option<ProbTable>>,
}

impl<'a> TeacherCache<'a> {
    fn get(&mut self, id: usize) -> Result<&ProbTable> {
        let slot = &mut self.tables[id - 1];
        if slot.is_none() {
            let ckpt = self.store.get(id).ok_or(Error::OutOfRange {
                what: "checkpoint id",
                value: id as f64,
            })?;
            *slot = Some(prob_table(&ckpt.model, self.corpus)?);
        }
        Ok(slot.as_ref().expect("filled above"))
    }
}

pub fn run(config: &DistillConfig, inputs: &DistillInputs<'_>) -> Result<RunOutput> {
    config.validate()?;
    let method = config.method;
    let store = inputs.teacher;
    if method.needs_student_reference() && inputs.student_sft.is_none() {
        return Err(Error::MissingArtifact("student SFT reference model"));
    }
    store.spec().validate().and_then(|_| inputs.student_spec.validate())?;

    let n_phases = config.n_phases.unwrap_or(store.len());
    let t_steps = config.phase_steps;
    let total_steps = n_phases * t_steps;

    let mut student = match config.init_from {
        InitFrom::Scratch => MlpModel::init(inputs.student_spec, &mut rng::stream(config.seed, Stream::StudentInit))?,
        InitFrom::StudentSft => inputs
            .student_sft
            .cloned()
            .ok_or(Error::MissingArtifact("student SFT model for initialization"))?,
    };
    if student.spec() != *inputs.student_spec {
        return Err(Error::InvalidConfig(
            "student SFT model does not match the student architecture".into(),
        ));
    }

    let mut sampler = BatchSampler::new(
        inputs.train.len(),
        config.batch_size,
        rng::stream(config.seed, Stream::DistillBatches),
    );
    let schedule = LrSchedule::new(config.peak_lr, t_steps, config.warmup_ratio)?;
    let mut state = OptimState::new(&student, config.adamw);
    let mut teachers = TeacherCache {
        store,
        corpus: inputs.train,
        tables: vec![None; store.len()],
    };
    let sched_tables = if method.is_scheduled() {
        Some(CheckpointTables::from_store(store, inputs.schedule_eval)?)
    } else {
        None
    };
    let student_ref_table = match (method.needs_student_reference(), inputs.student_sft) {
        (true, Some(m)) => Some(prob_table(m, inputs.train)?),
        _ => None,
    };

    let mut log = RunLog {
        method,
        steps: Vec::with_capacity(total_steps),
        phases: Vec::with_capacity(n_phases),
        decisions: Vec::new(),
        evals: Vec::new(),
        best: EvalRecord {
            step: 0,
            test_ce: f64::INFINITY,
            test_accuracy: f64::NEG_INFINITY,
        },
    };
    let mut best_student = student.clone();
    let mut aw_table: Option<AwTable> = None;
    let mut hard_weights: Option<Vec<f64>> = None;

    for phase in 0..n_phases {
        let start = phase * t_steps;
        let teacher_id = match method {
            Method::SftOnly
            | Method::DistillOnly
            | Method::Td
            | Method::Rkl
            | Method::Taid
            | Method::HardAw
            | Method::Aw => store.best_id(),
            Method::Cd => progressive_id(store.len(), t_steps, start),
            Method::Scd | Method::ScdAw => {
                let tables = sched_tables.as_ref().expect("built for scheduled methods");
                let student_table = prob_table(&student, inputs.schedule_eval)?;
                let decision = tables.select(phase, &student_table)?;
                let id = decision.chosen_id;
                log.decisions.push(decision);
                id
            }
        };

        if let Some(student_ref) = &student_ref_table {
            let stale = aw_table.as_ref().is_none_or(|t| t.teacher_id != teacher_id);
            if stale {
                let table = AwTable::from_tables(student_ref, teachers.get(teacher_id)?, teacher_id, inputs.train)?;
                hard_weights = Some(table.hard_weights(config.hard_aw_tau, config.alpha));
                aw_table = Some(table);
            }
        }

        state.reset();
        log.phases.push(PhaseRecord {
            phase,
            start_step: start,
            teacher_id,
            mean_aw: aw_table
                .as_ref()
                .map(|t| t.weights.iter().sum::<f64>() / t.len().max(1) as f64),
            optimizer_reset: state.moments_are_zero() && state.step_count == 0,
        });

        if method != Method::SftOnly {
            teachers.get(teacher_id)?;
        }
        let teacher_table = if method == Method::SftOnly {
            None
        } else {
            teachers.tables[teacher_id - 1].as_ref()
        };

        for k in 0..t_steps {
            let global = start + k;
            let batch = sampler.next_batch();
            let lr = schedule.lr_at(k)?;
            let step_inputs = StepInputs {
                method,
                alpha: config.alpha,
                taid_t: config.taid.t_at(global, total_steps),
                hard_aw_tau: config.hard_aw_tau,
                teacher: teacher_table,
                aw_table: aw_table.as_ref(),
            };
            let objective = method_objective(&step_inputs, hard_weights.as_deref())?;
            let mut grads = Gradients::zeros_like(&student);
            let loss = batch_gradient(&student, inputs.train, &batch, &objective, &mut grads)
                .map_err(|e| annotate(e, method, global))?;
            adamw_step(&mut student, &grads, &mut state, lr).map_err(|e| annotate(e, method, global))?;
            log.steps.push(StepRecord {
                step: global,
                phase,
                teacher_id,
                lr,
                loss,
            });

            let done = global + 1;
            if done.is_multiple_of(config.eval_every) || done == total_steps {
                let m = evaluate(&student, inputs.test)?;
                let record = EvalRecord {
                    step: done,
                    test_ce: m.mean_ce,
                    test_accuracy: m.accuracy,
                };
                if record.test_accuracy > log.best.test_accuracy {
                    log.best = record;
                    best_student = student.clone();
                }
                log.evals.push(record);
            }
        }
    }

    Ok(RunOutput {
        log,
        final_student: student,
        best_student,
        aw_table,
    })
}

fn annotate(err: Error, method: Method, step: usize) -> Error {
    match err {
        Error::NonFinite { what } => Error::NonFinite {
            what: {
                let mut s = String::from(what.as_str());
                s.push_str(&alloc::format!(" ({} step {step})", method.name()));
                s
            },
        },
        other => other,
    }
}

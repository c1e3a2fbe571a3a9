//! Supervised training with evenly spaced snapshots, and best-snapshot selection.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::losses::{self, prob_table};
use crate::nn::{Gradients, MlpModel, ModelSpec};
use crate::objective::{batch_gradient, BatchSampler, Objective};
use crate::optim::{adamw_step, AdamWConfig, LrSchedule, OptimState};
use crate::rng::{self, Stream};
use crate::tasks::Corpus;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SftConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub n_checkpoints: usize,
    pub peak_lr: f64,
    pub warmup_ratio: f64,
    pub adamw: AdamWConfig,
}

impl Default for SftConfig {
    fn default() -> Self {
        Self {
            epochs: 16,
            batch_size: 8,
            n_checkpoints: 8,
            peak_lr: 1e-3,
            warmup_ratio: 0.1,
            adamw: AdamWConfig::default(),
        }
    }
}

impl SftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_checkpoints < 2 {
            return Err(Error::InvalidConfig(format!(
                "n_checkpoints must be at least 2, got {}",
                self.n_checkpoints
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig("epochs and batch_size must be positive".into()));
        }
        LrSchedule::new(self.peak_lr, 1, self.warmup_ratio)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalMetrics {
    /// Mean over samples of the summed per-position cross-entropy.
    pub mean_ce: f64,
    /// Fraction of scored positions whose argmax equals the target.
    pub accuracy: f64,
}

pub fn evaluate(model: &MlpModel, corpus: &Corpus) -> Result<EvalMetrics> {
    let table = prob_table(model, corpus)?;
    let mut ce = 0.0;
    let mut hits = 0usize;
    for i in 0..corpus.len() {
        ce += table.sample_ce(corpus, i);
        hits += corpus
            .positions(i)
            .filter(|&p| argmax(table.row(p)) == corpus.target(p))
            .count();
    }
    Ok(EvalMetrics {
        mean_ce: ce / corpus.len().max(1) as f64,
        accuracy: hits as f64 / corpus.n_positions().max(1) as f64,
    })
}

/// Index of the largest entry, first one on ties.
pub fn argmax(xs: &[f64]) -> usize {
    xs.iter()
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) },
        )
        .0
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub id: usize,
    pub step: usize,
    pub epoch: f64,
    pub val_risk: f64,
    pub val_accuracy: f64,
    pub model: MlpModel,
}

/// The ordered snapshots `p^(1) .. p^(N)` of one training run; `p^(N)` is the final model.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointStore {
    checkpoints: Vec<Checkpoint>,
    best_id: usize,
    train_fingerprint: u64,
    val_fingerprint: u64,
    config: SftConfig,
}

impl CheckpointStore {
    pub fn new(
        checkpoints: Vec<Checkpoint>,
        best_id: usize,
        train_fingerprint: u64,
        val_fingerprint: u64,
        config: SftConfig,
    ) -> Result<Self> {
        if checkpoints.len() < 2 {
            return Err(Error::InvalidConfig(format!(
                "a checkpoint store needs at least 2 checkpoints, got {}",
                checkpoints.len()
            )));
        }
        for (i, c) in checkpoints.iter().enumerate() {
            if c.id != i + 1 {
                return Err(Error::InvalidConfig(format!(
                    "checkpoint ids must run 1..N in order, found {} at position {}",
                    c.id,
                    i + 1
                )));
            }
        }
        if checkpoints.windows(2).any(|w| w[0].step >= w[1].step) {
            return Err(Error::InvalidConfig(
                "checkpoint steps must be strictly increasing".into(),
            ));
        }
        let spec = checkpoints[0].model.spec();
        if checkpoints.iter().any(|c| c.model.spec() != spec) {
            return Err(Error::InvalidConfig(
                "all checkpoints must share one architecture".into(),
            ));
        }
        if !(1..=checkpoints.len()).contains(&best_id) {
            return Err(Error::OutOfRange {
                what: "best checkpoint id",
                value: best_id as f64,
            });
        }
        Ok(Self {
            checkpoints,
            best_id,
            train_fingerprint,
            val_fingerprint,
            config,
        })
    }

    pub fn len(&self) -> usize {
        self.checkpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.checkpoints.is_empty()
    }

    pub fn checkpoints(&self) -> &[Checkpoint] {
        &self.checkpoints
    }

    /// 1-based lookup.
    pub fn get(&self, id: usize) -> Option<&Checkpoint> {
        id.checked_sub(1).and_then(|i| self.checkpoints.get(i))
    }

    pub fn best_id(&self) -> usize {
        self.best_id
    }

    pub fn best(&self) -> &Checkpoint {
        &self.checkpoints[self.best_id - 1]
    }

    pub fn last(&self) -> &Checkpoint {
        self.checkpoints.last().expect("store holds at least two checkpoints")
    }

    pub fn train_fingerprint(&self) -> u64 {
        self.train_fingerprint
    }

    pub fn val_fingerprint(&self) -> u64 {
        self.val_fingerprint
    }

    pub fn config(&self) -> &SftConfig {
        &self.config
    }

    pub fn spec(&self) -> ModelSpec {
        self.checkpoints[0].model.spec()
    }

    /// Re-scores every checkpoint on `val` and re-selects the best one.
    pub fn reselect_best(&self, val: &Corpus) -> Result<usize> {
        let risks = self
            .checkpoints
            .iter()
            .map(|c| evaluate(&c.model, val).map(|m| m.mean_ce))
            .collect::<Result<Vec<_>>>()?;
        Ok(select_best(&risks))
    }
}

/// 1-based id of the smallest risk; ties go to the later checkpoint.
pub fn select_best(val_risks: &[f64]) -> usize {
    let mut best = 0;
    for (i, &r) in val_risks.iter().enumerate() {
        if r <= val_risks[best] {
            best = i;
        }
    }
    best + 1
}

/// Steps after which snapshots `1..=n` are taken: `round(i · total / n)`.
pub fn checkpoint_steps(total_steps: usize, n: usize) -> Vec<usize> {
    (1..=n)
        .map(|i| libm::round(i as f64 * total_steps as f64 / n as f64) as usize)
        .collect()
}

/// Supervised cross-entropy training from a seeded init, snapshotting `n_checkpoints` times.
///
/// `init` and `batches` name the random streams to use, so teacher and student runs
/// from one seed stay independent.
pub fn train_sft(
    spec: &ModelSpec,
    train: &Corpus,
    val: &Corpus,
    config: &SftConfig,
    seed: u64,
    init: Stream,
    batches: Stream,
) -> Result<CheckpointStore> {
    config.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::InvalidConfig(
            "training and validation sets must be non-empty".into(),
        ));
    }
    let mut model = MlpModel::init(spec, &mut rng::stream(seed, init))?;
    let mut sampler = BatchSampler::new(train.len(), config.batch_size, rng::stream(seed, batches));
    let steps_per_epoch = sampler.batches_per_epoch();
    let total_steps = config.epochs * steps_per_epoch;
    if total_steps < config.n_checkpoints {
        return Err(Error::InvalidConfig(format!(
            "{total_steps} training steps cannot hold {} checkpoints",
            config.n_checkpoints
        )));
    }
    let schedule = LrSchedule::new(config.peak_lr, total_steps, config.warmup_ratio)?;
    let mut state = OptimState::new(&model, config.adamw);
    let mut grads = Gradients::zeros_like(&model);
    let snapshot_at = checkpoint_steps(total_steps, config.n_checkpoints);
    let mut checkpoints: Vec<Checkpoint> = Vec::with_capacity(config.n_checkpoints);
    let objective = Objective::cross_entropy();

    for step in 0..total_steps {
        let batch = sampler.next_batch();
        grads.fill_zero();
        let outcome = batch_gradient(&model, train, &batch, &objective, &mut grads)
            .and_then(|_| adamw_step(&mut model, &grads, &mut state, schedule.lr_at(step)?));
        if let Err(err) = outcome {
            return match err {
                Error::NonFinite { .. } => Err(Error::Diverged {
                    step,
                    last_good: checkpoints.pop().map(alloc::boxed::Box::new),
                }),
                other => Err(other),
            };
        }
        let done = step + 1;
        if snapshot_at[checkpoints.len()] == done {
            let metrics = evaluate(&model, val)?;
            checkpoints.push(Checkpoint {
                id: checkpoints.len() + 1,
                step: done,
                epoch: done as f64 / steps_per_epoch as f64,
                val_risk: metrics.mean_ce,
                val_accuracy: metrics.accuracy,
                model: model.clone(),
            });
        }
    }
    let risks: Vec<f64> = checkpoints.iter().map(|c| c.val_risk).collect();
    let best_id = select_best(&risks);
    CheckpointStore::new(checkpoints, best_id, train.fingerprint(), val.fingerprint(), *config)
}

/// Mean summed cross-entropy of `model` on `corpus`, for quick checks.
pub fn mean_risk(model: &MlpModel, corpus: &Corpus) -> Result<f64> {
    let table = losses::prob_table(model, corpus)?;
    Ok((0..corpus.len()).map(|i| table.sample_ce(corpus, i)).sum::<f64>() / corpus.len().max(1) as f64)
}

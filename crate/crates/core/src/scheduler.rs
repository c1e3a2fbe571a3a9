//! Teacher-checkpoint scheduling.
//!
//! The scheduled variant picks, at the start of each phase, the checkpoint `j` minimizing
//!
//! ```text
//! E_x KL(p_best(x) || p_j(x))  +  E_x KL(f_student(x) || p_j(x))
//! ```
//!
//! on a frozen evaluation subset: the first term favors strong checkpoints, the second
//! checkpoints close to where the student currently is. The fixed baseline walks the
//! checkpoints in order, `T` steps each.

use alloc::vec::Vec;

use crate::checkpoints::{select_best, CheckpointStore};
use crate::error::{Error, Result};
use crate::losses::{kl_forward, prob_table, ProbTable};
use crate::tasks::Corpus;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScheduleDecision {
    pub phase: usize,
    pub chosen_id: usize,
    /// Indexed by `id - 1`.
    pub metric1: Vec<f64>,
    pub metric2: Vec<f64>,
    pub total: Vec<f64>,
    pub eval_fingerprint: u64,
}

/// Mean over samples of the position-averaged `KL(p || q)`.
pub fn mean_seq_kl(p: &ProbTable, q: &ProbTable) -> Result<f64> {
    p.check_compatible(q)?;
    let n = p.n_samples();
    if n == 0 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for i in 0..n {
        let rows = p.sample_rows(i);
        let s = rows.len();
        if s == 0 {
            continue;
        }
        let kl: f64 = rows.zip(q.sample_rows(i)).map(|(a, b)| kl_forward(a, b)).sum();
        total += kl / s as f64;
    }
    Ok(total / n as f64)
}

/// Output distributions of every checkpoint on the schedule-evaluation subset.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointTables {
    tables: Vec<ProbTable>,
    best_id: usize,
}

impl CheckpointTables {
    pub fn new(tables: Vec<ProbTable>, best_id: usize) -> Result<Self> {
        let first = tables.first().ok_or(Error::MissingArtifact("checkpoint tables"))?;
        for t in &tables[1..] {
            first.check_compatible(t)?;
        }
        if !(1..=tables.len()).contains(&best_id) {
            return Err(Error::OutOfRange {
                what: "best checkpoint id",
                value: best_id as f64,
            });
        }
        Ok(Self { tables, best_id })
    }

    pub fn from_store(store: &CheckpointStore, eval: &Corpus) -> Result<Self> {
        let tables = store
            .checkpoints()
            .iter()
            .map(|c| prob_table(&c.model, eval))
            .collect::<Result<Vec<_>>>()?;
        Self::new(tables, store.best_id())
    }

    pub fn len(&self) -> usize {
        self.tables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    pub fn best_id(&self) -> usize {
        self.best_id
    }

    pub fn fingerprint(&self) -> u64 {
        self.tables[0].fingerprint()
    }

    pub fn table(&self, id: usize) -> Result<&ProbTable> {
        id.checked_sub(1)
            .and_then(|i| self.tables.get(i))
            .ok_or(Error::OutOfRange {
                what: "checkpoint id",
                value: id as f64,
            })
    }

    /// `E_x KL(p_best || p_j)`: distance of candidate `j` from the best checkpoint.
    pub fn metric1(&self, j: usize) -> Result<f64> {
        mean_seq_kl(self.table(self.best_id)?, self.table(j)?)
    }

    /// `E_x KL(f_student || p_j)`, with the student table taken before the phase trains.
    pub fn metric2(&self, student: &ProbTable, j: usize) -> Result<f64> {
        mean_seq_kl(student, self.table(j)?)
    }

    pub fn select(&self, phase: usize, student: &ProbTable) -> Result<ScheduleDecision> {
        let ids = 1..=self.len();
        let metric1 = ids.clone().map(|j| self.metric1(j)).collect::<Result<Vec<_>>>()?;
        let metric2 = ids.map(|j| self.metric2(student, j)).collect::<Result<Vec<_>>>()?;
        let total: Vec<f64> = metric1.iter().zip(&metric2).map(|(a, b)| a + b).collect();
        Ok(ScheduleDecision {
            phase,
            chosen_id: select_best(&total),
            metric1,
            metric2,
            total,
            eval_fingerprint: self.fingerprint(),
        })
    }
}

/// Checkpoint used at `global_step` under the fixed `(N, T)` progression:
/// `min(⌊step / T⌋ + 1, N)`.
pub fn progressive_id(n: usize, phase_steps: usize, global_step: usize) -> usize {
    (global_step / phase_steps.max(1) + 1).min(n)
}

//! Sample-wise adaptive weighting between the distillation and cross-entropy terms.
//!
//! Each sample gets `w = σ(ln(L_S / L_T))`, where `L_S` and `L_T` are the summed
//! cross-entropies of a frozen reference student and a reference teacher on that sample.
//! Samples where the teacher is better lean on distillation; samples where the student
//! is already better lean on the ground truth.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::losses::ProbTable;
use crate::tasks::Corpus;

/// Lower clamp on reference losses before taking their ratio.
pub const LOSS_EPS: f64 = 1e-8;

/// `σ(ln(L_S / L_T))`, evaluated in the algebraically identical form `L_S / (L_S + L_T)`.
pub fn soft_aw(student_loss: f64, teacher_loss: f64) -> Result<f64> {
    for (what, v) in [("student loss", student_loss), ("teacher loss", teacher_loss)] {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::OutOfRange { what, value: v });
        }
    }
    let ls = student_loss.max(LOSS_EPS);
    let lt = teacher_loss.max(LOSS_EPS);
    Ok(ls / (ls + lt))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum AwMode {
    DistillOnly,
    CeOnly,
    /// The fixed α-mixture.
    Td,
}

/// Three-way split: teacher clearly better → distill only, student clearly better → CE only.
pub fn hard_aw(student_loss: f64, teacher_loss: f64, tau: f64) -> AwMode {
    if teacher_loss < student_loss - tau {
        AwMode::DistillOnly
    } else if student_loss < teacher_loss - tau {
        AwMode::CeOnly
    } else {
        AwMode::Td
    }
}

/// `w · distill + (1 − w) · ce`.
pub fn aw_loss(w: f64, distill: f64, ce: f64) -> f64 {
    w * distill + (1.0 - w) * ce
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AwTable {
    pub weights: Vec<f64>,
    pub student_losses: Vec<f64>,
    pub teacher_losses: Vec<f64>,
    /// Checkpoint id the teacher losses came from.
    pub teacher_id: usize,
    pub fingerprint: u64,
}

impl AwTable {
    /// Builds the table from the two reference models' distributions over `corpus`.
    pub fn from_tables(student: &ProbTable, teacher: &ProbTable, teacher_id: usize, corpus: &Corpus) -> Result<Self> {
        student.check_fingerprint(corpus.fingerprint())?;
        teacher.check_fingerprint(corpus.fingerprint())?;
        let student_losses: Vec<f64> = (0..corpus.len()).map(|i| student.sample_ce(corpus, i)).collect();
        let teacher_losses: Vec<f64> = (0..corpus.len()).map(|i| teacher.sample_ce(corpus, i)).collect();
        Self::from_losses(student_losses, teacher_losses, teacher_id, corpus.fingerprint())
    }

    pub fn from_losses(
        student_losses: Vec<f64>,
        teacher_losses: Vec<f64>,
        teacher_id: usize,
        fingerprint: u64,
    ) -> Result<Self> {
        crate::error::check_len("teacher losses", student_losses.len(), teacher_losses.len())?;
        let weights = student_losses
            .iter()
            .zip(&teacher_losses)
            .map(|(&s, &t)| soft_aw(s, t))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            weights,
            student_losses,
            teacher_losses,
            teacher_id,
            fingerprint,
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Per-sample mixing weights under the hard rule: 1, 0, or `alpha`.
    pub fn hard_weights(&self, tau: f64, alpha: f64) -> Vec<f64> {
        self.student_losses
            .iter()
            .zip(&self.teacher_losses)
            .map(|(&s, &t)| match hard_aw(s, t, tau) {
                AwMode::DistillOnly => 1.0,
                AwMode::CeOnly => 0.0,
                AwMode::Td => alpha,
            })
            .collect()
    }
}

/// Scores both reference models on `corpus` (no gradients) and derives the weights.
pub fn compute_aw_table(
    student_ref: &crate::nn::MlpModel,
    teacher_ref: &crate::nn::MlpModel,
    teacher_id: usize,
    corpus: &Corpus,
) -> Result<AwTable> {
    let s = crate::losses::prob_table(student_ref, corpus)?;
    let t = crate::losses::prob_table(teacher_ref, corpus)?;
    AwTable::from_tables(&s, &t, teacher_id, corpus)
}

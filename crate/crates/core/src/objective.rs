//! Mini-batch loss and gradient for every training objective in the crate.
//!
//! A sample's loss is `w · L_distill + (1 − w) · L_CE`, where `L_distill` averages the
//! per-position divergence over the sample's scored positions and `L_CE` sums the
//! per-position cross-entropy. `w = 0` is plain supervised training.

use alloc::vec;

use crate::error::{Error, Result};
use crate::losses::{self, ProbTable, PROB_EPS};
use crate::nn::{Gradients, MlpModel};
use crate::tasks::Corpus;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Divergence {
    /// `KL(teacher || student)`
    Forward,
    /// `KL(student || teacher)`
    Reverse,
    /// `KL(p_t || student)` against the logit-interpolated target.
    Taid { t: f64 },
}

#[derive(Debug, Clone, Copy)]
pub enum SampleWeight<'a> {
    Constant(f64),
    /// Indexed by sample id in the corpus.
    PerSample(&'a [f64]),
}

impl SampleWeight<'_> {
    fn get(&self, sample: usize) -> f64 {
        match self {
            SampleWeight::Constant(w) => *w,
            SampleWeight::PerSample(ws) => ws[sample],
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Objective<'a> {
    /// Teacher distributions over the same corpus, and the divergence to use against them.
    pub teacher: Option<(&'a ProbTable, Divergence)>,
    pub weight: SampleWeight<'a>,
}

impl<'a> Objective<'a> {
    pub fn cross_entropy() -> Self {
        Self {
            teacher: None,
            weight: SampleWeight::Constant(0.0),
        }
    }
}

/// Batch means of the loss and its two components.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossBreakdown {
    pub total: f64,
    pub distill: f64,
    pub ce: f64,
    pub mean_weight: f64,
    /// Positions whose target probability fell below the log clamp.
    pub clamped: usize,
}

/// Adds the gradient of the batch-mean loss into `grads` (which the caller zeroes).
pub fn batch_gradient(
    model: &MlpModel,
    corpus: &Corpus,
    batch: &[usize],
    objective: &Objective<'_>,
    grads: &mut Gradients,
) -> Result<LossBreakdown> {
    if let Some((table, _)) = objective.teacher {
        table.check_fingerprint(corpus.fingerprint())?;
    }
    let k = corpus.n_classes();
    let mut q = vec![0.0; k];
    let mut g_ce = vec![0.0; k];
    let mut g_kd = vec![0.0; k];
    let mut g = vec![0.0; k];
    let mut target = vec![0.0; k];
    let mut teacher_logits = vec![0.0; k];
    let scale = 1.0 / batch.len().max(1) as f64;
    let mut out = LossBreakdown::default();

    for &i in batch {
        let w = objective.weight.get(i);
        if !(0.0..=1.0).contains(&w) {
            return Err(Error::OutOfRange {
                what: "sample weight",
                value: w,
            });
        }
        let positions = corpus.positions(i);
        let s = positions.len();
        if s == 0 {
            continue;
        }
        let inv_s = 1.0 / s as f64;
        let (mut ce_sum, mut kd_sum) = (0.0, 0.0);
        for p in positions {
            let trace = model.trace(corpus.input(p))?;
            let z = trace.logits();
            if z.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    what: alloc::format!("student logits at sample {i}"),
                });
            }
            losses::softmax_into(z, &mut q);
            let y = corpus.target(p);
            let (ce, clamped) = losses::cross_entropy_checked(y, &q)?;
            out.clamped += usize::from(clamped);
            ce_sum += ce;
            losses::cross_entropy_grad(y, &q, &mut g_ce);

            match objective.teacher {
                Some((table, div)) if w > 0.0 => {
                    let p_row = table.row(p);
                    let kd = match div {
                        Divergence::Forward => {
                            losses::kl_forward_grad(p_row, &q, &mut g_kd);
                            losses::kl_forward(p_row, &q)
                        }
                        Divergence::Reverse => {
                            losses::kl_reverse_grad(p_row, &q, &mut g_kd);
                            losses::kl_reverse(p_row, &q)
                        }
                        Divergence::Taid { t } => {
                            for (l, &pp) in teacher_logits.iter_mut().zip(p_row) {
                                *l = libm::log(pp.max(PROB_EPS));
                            }
                            let mixed: alloc::vec::Vec<f64> = z
                                .iter()
                                .zip(&teacher_logits)
                                .map(|(zs, zt)| (1.0 - t) * zs + t * zt)
                                .collect();
                            losses::softmax_into(&mixed, &mut target);
                            // the target is a constant: gradient is q − p_t
                            losses::kl_forward_grad(&target, &q, &mut g_kd);
                            losses::kl_forward(&target, &q)
                        }
                    };
                    kd_sum += kd;
                    for ((gi, a), b) in g.iter_mut().zip(&g_kd).zip(&g_ce) {
                        *gi = w * inv_s * a + (1.0 - w) * b;
                    }
                }
                _ => {
                    for (gi, b) in g.iter_mut().zip(&g_ce) {
                        *gi = (1.0 - w) * b;
                    }
                }
            }
            model.accumulate_backward(&trace, &g, grads, scale)?;
        }
        let kd = kd_sum * inv_s;
        out.distill += kd * scale;
        out.ce += ce_sum * scale;
        out.total += (w * kd + (1.0 - w) * ce_sum) * scale;
        out.mean_weight += w * scale;
    }
    if !out.total.is_finite() {
        return Err(Error::NonFinite {
            what: "batch loss".into(),
        });
    }
    Ok(out)
}

/// Value-only counterpart of [`batch_gradient`], used by finite-difference checks.
pub fn batch_loss(model: &MlpModel, corpus: &Corpus, batch: &[usize], objective: &Objective<'_>) -> Result<f64> {
    let mut total = 0.0;
    for &i in batch {
        let w = objective.weight.get(i);
        let positions = corpus.positions(i);
        let s = positions.len();
        if s == 0 {
            continue;
        }
        let (mut ce_sum, mut kd_sum) = (0.0, 0.0);
        for p in positions {
            let z = model.forward(corpus.input(p))?;
            let q = losses::softmax(&z)?;
            ce_sum += losses::cross_entropy(corpus.target(p), &q)?;
            if let Some((table, div)) = objective.teacher {
                let p_row = table.row(p);
                kd_sum += match div {
                    Divergence::Forward => losses::kl_forward(p_row, &q),
                    Divergence::Reverse => losses::kl_reverse(p_row, &q),
                    Divergence::Taid { t } => {
                        // value only: the target is rebuilt from these logits
                        let teacher_logits: alloc::vec::Vec<f64> =
                            p_row.iter().map(|pp| libm::log(pp.max(PROB_EPS))).collect();
                        let target = losses::taid_target(t, &z, &teacher_logits)?;
                        losses::kl_forward(&target, &q)
                    }
                };
            }
        }
        total += w * kd_sum / s as f64 + (1.0 - w) * ce_sum;
    }
    Ok(total / batch.len().max(1) as f64)
}

/// Endless mini-batch stream: a fresh permutation every epoch, consumed in order. The last
/// batch of an epoch may be short.
#[derive(Debug, Clone)]
pub struct BatchSampler {
    order: alloc::vec::Vec<usize>,
    cursor: usize,
    batch_size: usize,
    rng: crate::rng::Rng,
}

impl BatchSampler {
    pub fn new(n_samples: usize, batch_size: usize, rng: crate::rng::Rng) -> Self {
        let mut sampler = Self {
            order: (0..n_samples).collect(),
            cursor: n_samples,
            batch_size: batch_size.max(1),
            rng,
        };
        sampler.reshuffle_if_done();
        sampler
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.order.len().div_ceil(self.batch_size)
    }

    fn reshuffle_if_done(&mut self) {
        if self.cursor >= self.order.len() {
            use rand::seq::SliceRandom;
            self.order.sort_unstable();
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
    }

    pub fn next_batch(&mut self) -> alloc::vec::Vec<usize> {
        let end = (self.cursor + self.batch_size).min(self.order.len());
        let batch = self.order[self.cursor..end].to_vec();
        self.cursor = end;
        self.reshuffle_if_done();
        batch
    }
}

//! Probability-space objectives, all in nats.
//!
//! Every loss here comes with its gradient with respect to the student's logits; the
//! network backward pass takes it from there.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Deref;

use crate::error::{check_len, Error, Result};
use crate::nn::MlpModel;
use crate::tasks::Corpus;

/// Lower clamp applied to probabilities inside logarithms.
pub const PROB_EPS: f64 = 1e-12;

/// A probability vector produced by [`softmax`] (or validated by [`ProbVec::new`]).
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVec(Vec<f64>);

impl ProbVec {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if let Some(&bad) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::OutOfRange {
                what: "probability",
                value: bad,
            });
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::OutOfRange {
                what: "probability mass",
                value: sum,
            });
        }
        Ok(Self(probs))
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for ProbVec {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Max-subtracted softmax.
pub fn softmax(logits: &[f64]) -> Result<ProbVec> {
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(Error::NonFinite { what: "logits".into() });
    }
    let mut out = vec![0.0; logits.len()];
    softmax_into(logits, &mut out);
    Ok(ProbVec(out))
}

/// Unchecked softmax for hot loops; the caller guarantees finite logits.
pub fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &z) in out.iter_mut().zip(logits) {
        *o = libm::exp(z - max);
        sum += *o;
    }
    out.iter_mut().for_each(|o| *o /= sum);
}

#[inline]
fn clamped_ln(p: f64) -> f64 {
    libm::log(p.max(PROB_EPS))
}

/// `-ln q[target]` and whether the probability had to be clamped.
pub fn cross_entropy_checked(target: usize, q: &[f64]) -> Result<(f64, bool)> {
    let p = *q.get(target).ok_or(Error::OutOfRange {
        what: "target class",
        value: target as f64,
    })?;
    Ok((-clamped_ln(p), p < PROB_EPS))
}

pub fn cross_entropy(target: usize, q: &[f64]) -> Result<f64> {
    cross_entropy_checked(target, q).map(|(v, _)| v)
}

/// `dCE/dz = q - onehot(target)`.
pub fn cross_entropy_grad(target: usize, q: &[f64], out: &mut [f64]) {
    out.copy_from_slice(q);
    out[target] -= 1.0;
}

/// `KL(p || q) = Σ p ln(p / q)`, with `0 ln 0 = 0` and `q` clamped below by [`PROB_EPS`].
pub fn kl_forward(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(&pi, &qi)| pi * (libm::log(pi) - clamped_ln(qi)))
        .sum()
}

/// `KL(q_student || p_teacher)`.
pub fn kl_reverse(p_teacher: &[f64], q_student: &[f64]) -> f64 {
    kl_forward(q_student, p_teacher)
}

/// Gradient of `KL(p || softmax(z))` with respect to `z`: `q - p`.
pub fn kl_forward_grad(p: &[f64], q: &[f64], out: &mut [f64]) {
    for ((o, &pi), &qi) in out.iter_mut().zip(p).zip(q) {
        *o = qi - pi;
    }
}

/// Gradient of `KL(softmax(z) || p)` with respect to `z`: `q ⊙ (ln q − ln p − KL)`.
pub fn kl_reverse_grad(p_teacher: &[f64], q: &[f64], out: &mut [f64]) {
    let kl = kl_reverse(p_teacher, q);
    for ((o, &pi), &qi) in out.iter_mut().zip(p_teacher).zip(q) {
        *o = if qi > 0.0 {
            qi * (libm::log(qi) - clamped_ln(pi) - kl)
        } else {
            0.0
        };
    }
}

/// Position-averaged forward KL between two stacks of distributions.
pub fn seq_kl_forward<'a>(
    p_rows: impl ExactSizeIterator<Item = &'a [f64]>,
    q_rows: impl Iterator<Item = &'a [f64]>,
) -> f64 {
    let s = p_rows.len();
    if s == 0 {
        return 0.0;
    }
    let total: f64 = p_rows.zip(q_rows).map(|(p, q)| kl_forward(p, q)).sum();
    total / s as f64
}

fn check_t(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            what: "TAID interpolation t",
            value: t,
        })
    }
}

/// `softmax((1 - t) · z_student + t · z_teacher)`; the student logits are treated as constants.
pub fn taid_target(t: f64, student_logits: &[f64], teacher_logits: &[f64]) -> Result<ProbVec> {
    check_t(t)?;
    check_len("teacher logits", student_logits.len(), teacher_logits.len())?;
    let mixed: Vec<f64> = student_logits
        .iter()
        .zip(teacher_logits)
        .map(|(s, p)| (1.0 - t) * s + t * p)
        .collect();
    softmax(&mixed)
}

/// `KL(p_t || q_θ)` against the interpolated target.
pub fn taid_loss(t: f64, teacher_logits: &[f64], student_logits: &[f64]) -> Result<f64> {
    let target = taid_target(t, student_logits, teacher_logits)?;
    let q = softmax(student_logits)?;
    Ok(kl_forward(&target, &q))
}

/// `α · distill + (1 − α) · ce`.
pub fn compound_loss(alpha: f64, distill: f64, ce: f64) -> f64 {
    alpha * distill + (1.0 - alpha) * ce
}

/// Per-position output distributions of one model over a [`Corpus`].
#[derive(Debug, Clone, PartialEq)]
pub struct ProbTable {
    n_classes: usize,
    probs: Vec<f64>,
    offsets: Vec<usize>,
    fingerprint: u64,
}

impl ProbTable {
    /// Assembles a table from raw parts, checking the layout and the simplex constraint.
    pub fn from_parts(n_classes: usize, probs: Vec<f64>, offsets: Vec<usize>, fingerprint: u64) -> Result<Self> {
        let positions = *offsets.last().ok_or(Error::Shape {
            what: "table offsets",
            expected: 1,
            got: 0,
        })?;
        if offsets[0] != 0 || offsets.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidConfig(
                "table offsets must start at 0 and be non-decreasing".into(),
            ));
        }
        check_len("table probabilities", positions * n_classes, probs.len())?;
        for row in probs.chunks_exact(n_classes.max(1)) {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|p| p.is_nan() || *p < 0.0) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::OutOfRange {
                    what: "table row mass",
                    value: sum,
                });
            }
        }
        Ok(Self {
            n_classes,
            probs,
            offsets,
            fingerprint,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_positions(&self) -> usize {
        *self.offsets.last().expect("non-empty offsets")
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn row(&self, position: usize) -> &[f64] {
        &self.probs[position * self.n_classes..(position + 1) * self.n_classes]
    }

    pub fn sample_rows(&self, sample: usize) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        (self.offsets[sample]..self.offsets[sample + 1]).map(move |p| self.row(p))
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.probs.chunks_exact(self.n_classes)
    }

    pub fn check_fingerprint(&self, expected: u64) -> Result<()> {
        if self.fingerprint == expected {
            Ok(())
        } else {
            Err(Error::FingerprintMismatch {
                expected,
                got: self.fingerprint,
            })
        }
    }

    /// Same dataset and same layout as `other`.
    pub fn check_compatible(&self, other: &ProbTable) -> Result<()> {
        other.check_fingerprint(self.fingerprint)?;
        check_len("table positions", self.n_positions(), other.n_positions())?;
        check_len("table classes", self.n_classes, other.n_classes)
    }

    /// Mean over samples of `-Σ_s ln q(y_s)`.
    pub fn sample_ce(&self, corpus: &Corpus, sample: usize) -> f64 {
        corpus
            .positions(sample)
            .map(|p| -clamped_ln(self.row(p)[corpus.target(p)]))
            .sum()
    }
}

/// Runs `model` over every scored position of `corpus`.
pub fn prob_table(model: &MlpModel, corpus: &Corpus) -> Result<ProbTable> {
    check_len("model input", corpus.input_dim(), model.input_dim())?;
    check_len("model output", corpus.n_classes(), model.output_dim())?;
    let k = corpus.n_classes();
    let mut probs = vec![0.0; corpus.n_positions() * k];
    for (p, out) in probs.chunks_exact_mut(k).enumerate() {
        let logits = model.forward(corpus.input(p))?;
        if logits.iter().any(|z| !z.is_finite()) {
            return Err(Error::NonFinite {
                what: "model logits".into(),
            });
        }
        softmax_into(&logits, out);
    }
    Ok(ProbTable {
        n_classes: k,
        probs,
        offsets: corpus.offsets().to_vec(),
        fingerprint: corpus.fingerprint(),
    })
}

/// `-Σ_s ln q(y_s | context)` for one sample.
pub fn seq_ce(model: &MlpModel, corpus: &Corpus, sample: usize) -> Result<f64> {
    let mut total = 0.0;
    for p in corpus.positions(sample) {
        let q = softmax(&model.forward(corpus.input(p))?)?;
        total += cross_entropy(corpus.target(p), &q)?;
    }
    Ok(total)
}

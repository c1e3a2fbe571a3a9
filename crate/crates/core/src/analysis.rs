//! Student-favored / teacher-favored partition of a dataset and the data behind the
//! diagnostic plots.
//!
//! For each sample, `d(x) = R_x(student) − R_x(teacher)`. Samples with `d ≤ 0` are
//! student-favored (SFS), the rest teacher-favored (TFS). The mean risk gap splits into
//! the student's advantage on SFS and its deficit on TFS.

use alloc::vec::Vec;

use crate::checkpoints::argmax;
use crate::error::Result;
use crate::losses::prob_table;
use crate::nn::MlpModel;
use crate::scheduler::ScheduleDecision;
use crate::tasks::Corpus;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum RiskMode {
    /// Summed per-position cross-entropy of the sample.
    #[default]
    Ce,
    /// Per-sample error rate (1 − token accuracy).
    TaskMetric,
}

impl RiskMode {
    pub fn name(self) -> &'static str {
        match self {
            RiskMode::Ce => "ce",
            RiskMode::TaskMetric => "task_metric",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RiskReport {
    pub mode: RiskMode,
    /// `d(x) = R_x(student) − R_x(teacher)`, by sample id.
    pub diffs: Vec<f64>,
    pub sfs: Vec<usize>,
    pub tfs: Vec<usize>,
    /// `Σ_SFS (−d)`
    pub sfs_advantage: f64,
    /// `Σ_TFS d`
    pub tfs_deficit: f64,
    /// `tfs_deficit − sfs_advantage`
    pub total: f64,
}

impl RiskReport {
    /// Partitions precomputed per-sample differences; ties (`d = 0`) are student-favored.
    pub fn from_diffs(mode: RiskMode, diffs: Vec<f64>) -> Self {
        let (mut sfs, mut tfs) = (Vec::new(), Vec::new());
        let (mut advantage, mut deficit) = (0.0, 0.0);
        for (i, &d) in diffs.iter().enumerate() {
            if d <= 0.0 {
                sfs.push(i);
                advantage += -d;
            } else {
                tfs.push(i);
                deficit += d;
            }
        }
        Self {
            mode,
            diffs,
            sfs,
            tfs,
            sfs_advantage: advantage,
            tfs_deficit: deficit,
            total: deficit - advantage,
        }
    }

    pub fn n_sfs(&self) -> usize {
        self.sfs.len()
    }

    pub fn n_tfs(&self) -> usize {
        self.tfs.len()
    }
}

fn per_sample_risk(model: &MlpModel, corpus: &Corpus, mode: RiskMode) -> Result<Vec<f64>> {
    let table = prob_table(model, corpus)?;
    Ok((0..corpus.len())
        .map(|i| match mode {
            RiskMode::Ce => table.sample_ce(corpus, i),
            RiskMode::TaskMetric => {
                let positions = corpus.positions(i);
                let n = positions.len();
                if n == 0 {
                    return 0.0;
                }
                let wrong = positions.filter(|&p| argmax(table.row(p)) != corpus.target(p)).count();
                wrong as f64 / n as f64
            }
        })
        .collect())
}

pub fn partition(student: &MlpModel, teacher: &MlpModel, corpus: &Corpus, mode: RiskMode) -> Result<RiskReport> {
    let rs = per_sample_risk(student, corpus, mode)?;
    let rt = per_sample_risk(teacher, corpus, mode)?;
    let diffs = rs.iter().zip(&rt).map(|(s, t)| s - t).collect();
    Ok(RiskReport::from_diffs(mode, diffs))
}

/// Empirical form of the surpass condition: the student wins when its SFS advantage covers
/// its TFS deficit. The deficit stands in for the (uncomputable) bound on the TFS side.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SurpassDiagnostic {
    pub student_surpasses: bool,
    /// `sfs_advantage − tfs_deficit`
    pub margin: f64,
    pub empirical_tfs_deficit: f64,
    pub sfs_advantage: f64,
}

pub fn surpass_diagnostic(report: &RiskReport) -> SurpassDiagnostic {
    SurpassDiagnostic {
        student_surpasses: report.total <= 0.0,
        margin: report.sfs_advantage - report.tfs_deficit,
        empirical_tfs_deficit: report.tfs_deficit,
        sfs_advantage: report.sfs_advantage,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SortedDiffRow {
    /// 1-based.
    pub rank: usize,
    pub sample_id: usize,
    pub diff: f64,
}

/// Rows sorted by descending difference; equal differences keep sample-id order.
pub fn sorted_diffs(report: &RiskReport) -> Vec<SortedDiffRow> {
    let mut ids: Vec<usize> = (0..report.diffs.len()).collect();
    ids.sort_by(|&a, &b| report.diffs[b].total_cmp(&report.diffs[a]));
    ids.into_iter()
        .enumerate()
        .map(|(r, i)| SortedDiffRow {
            rank: r + 1,
            sample_id: i,
            diff: report.diffs[i],
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// Equal-width half-open bins over `[0, 1)`; a weight of exactly 1 lands in the last bin.
pub fn aw_histogram(weights: &[f64], n_bins: usize) -> Result<Vec<HistogramBin>> {
    if n_bins < 2 {
        return Err(crate::error::Error::OutOfRange {
            what: "histogram bin count",
            value: n_bins as f64,
        });
    }
    let mut counts = alloc::vec![0usize; n_bins];
    for &w in weights {
        let b = libm::floor(w * n_bins as f64) as isize;
        counts[b.clamp(0, n_bins as isize - 1) as usize] += 1;
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(b, count)| HistogramBin {
            lo: b as f64 / n_bins as f64,
            hi: (b + 1) as f64 / n_bins as f64,
            count,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleTraceRow {
    pub phase: usize,
    pub candidate_id: usize,
    pub metric1: f64,
    pub metric2: f64,
    pub total: f64,
    pub chosen: bool,
}

/// Long format: one row per (phase, candidate).
pub fn schedule_trace(decisions: &[ScheduleDecision]) -> Vec<ScheduleTraceRow> {
    decisions
        .iter()
        .flat_map(|d| {
            (0..d.total.len()).map(move |j| ScheduleTraceRow {
                phase: d.phase,
                candidate_id: j + 1,
                metric1: d.metric1[j],
                metric2: d.metric2[j],
                total: d.total[j],
                chosen: d.chosen_id == j + 1,
            })
        })
        .collect()
}

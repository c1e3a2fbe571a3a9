//! Aggregation over an output root: a seed-median summary table, reference-model
//! metrics, per-run analysis files and method-ordering checks.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use distill_lab_core::analysis::{
    aw_histogram, partition, schedule_trace, sorted_diffs, surpass_diagnostic, RiskMode, RiskReport, SurpassDiagnostic,
};
use distill_lab_core::checkpoints::evaluate;
use distill_lab_core::distill::{EvalRecord, Method};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::emit;
use crate::error::{LabError, Result};
use crate::manifest::{RunManifest, RESOLVED_CONFIG_FILE};
use crate::pipeline::{load_best_student, load_sft, sft_dir, AW_TABLE_FILE};
use crate::runlog::{read_best, read_events, Event, RUN_LOG_FILE};
use crate::store_io::write_json_atomic;

pub const SUMMARY_FILE: &str = "summary.csv";
pub const REFERENCES_FILE: &str = "references.csv";
pub const ORDERING_FILE: &str = "ordering_checks.csv";
pub const ANALYSIS_DIR: &str = "analysis";
pub const RISK_FILE: &str = "risk.json";
pub const AW_HISTOGRAM_BINS: usize = 10;

/// Ordering checks on the seed-median best test metric, as `(better, baseline)` pairs.
pub const ORDERING_CHECKS: [(Method, Method); 2] = [(Method::ScdAw, Method::Td), (Method::Scd, Method::Cd)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    /// Every expected seed completed.
    Ok,
    /// Some expected seeds completed.
    Partial,
    /// Run directories exist but none completed.
    Failed,
    /// No run directory exists.
    Missing,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub task: String,
    pub method: String,
    pub n_ok: usize,
    pub n_expected: usize,
    /// Seed median of the best test accuracy; empty without completed runs.
    pub median_test_accuracy: Option<f64>,
    /// Seed median of the test CE at the best evaluation.
    pub median_test_ce: Option<f64>,
    pub status: RowStatus,
    /// Expected seeds without a completed run, separated by `;`.
    pub missing_seeds: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferenceRow {
    pub task: String,
    pub model: &'static str,
    pub n_seeds: usize,
    pub median_test_accuracy: Option<f64>,
    pub median_test_ce: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderingRow {
    pub task: String,
    pub better: &'static str,
    pub baseline: &'static str,
    pub better_median: Option<f64>,
    pub baseline_median: Option<f64>,
    /// `true`/`false`, or empty when either side has no completed run.
    pub holds: Option<bool>,
    /// Run logs behind both medians, separated by `;`.
    pub logs: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskSection {
    pub n_samples: usize,
    pub n_sfs: usize,
    pub n_tfs: usize,
    pub sfs_advantage: f64,
    pub tfs_deficit: f64,
    pub total: f64,
    pub surpass: SurpassDiagnostic,
}

impl RiskSection {
    fn new(report: &RiskReport) -> Self {
        Self {
            n_samples: report.diffs.len(),
            n_sfs: report.n_sfs(),
            n_tfs: report.n_tfs(),
            sfs_advantage: report.sfs_advantage,
            tfs_deficit: report.tfs_deficit,
            total: report.total,
            surpass: surpass_diagnostic(report),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskFile {
    pub split: &'static str,
    pub student: &'static str,
    pub teacher: String,
    /// Sign convention and per-sample risk of each mode.
    pub definitions: BTreeMap<&'static str, &'static str>,
    pub ce: RiskSection,
    pub task_metric: RiskSection,
}

/// What a report run found.
#[derive(Debug, Default)]
pub struct ReportOutcome {
    pub summary: Vec<SummaryRow>,
    pub references: Vec<ReferenceRow>,
    pub ordering: Vec<OrderingRow>,
    /// Per-run problems that did not stop the report.
    pub warnings: Vec<String>,
}

impl ReportOutcome {
    pub fn ordering_violations(&self) -> impl Iterator<Item = &OrderingRow> {
        self.ordering.iter().filter(|r| r.holds == Some(false))
    }
}

fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

fn sorted_subdirs(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    let entries = match fs::read_dir(dir) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(out),
        Err(e) => return Err(LabError::io(format!("listing {}", dir.display()), e)),
    };
    for entry in entries {
        let entry = entry.map_err(|e| LabError::io(format!("listing {}", dir.display()), e))?;
        if entry.path().is_dir() {
            if let Some(name) = entry.file_name().to_str() {
                out.push((name.to_string(), entry.path()));
            }
        }
    }
    out.sort();
    Ok(out)
}

fn seed_dirs(dir: &Path) -> Result<BTreeMap<u64, PathBuf>> {
    Ok(sorted_subdirs(dir)?
        .into_iter()
        .filter_map(|(name, path)| name.parse().ok().map(|s| (s, path)))
        .collect())
}

fn load_resolved(dir: &Path) -> Result<ExperimentConfig> {
    let path = dir.join(RESOLVED_CONFIG_FILE);
    if !path.exists() {
        return Err(LabError::missing("resolved config", &path));
    }
    ExperimentConfig::load(&path)
}

fn is_complete(dir: &Path) -> Result<bool> {
    Ok(RunManifest::read(dir)?.is_some_and(|m| m.is_complete()))
}

/// Writes `analysis/` for one completed run.
pub fn analyze_run(root: &Path, dir: &Path, seed: u64) -> Result<RiskFile> {
    let cfg = load_resolved(dir)?;
    let art = load_sft(&cfg, root, seed, false)?;
    let student = load_best_student(dir)?;
    let teacher = art.teacher.best();
    let out = dir.join(ANALYSIS_DIR);
    fs::create_dir_all(&out).map_err(|e| LabError::io(format!("creating {}", out.display()), e))?;

    let ce = partition(&student, &teacher.model, &art.data.test, RiskMode::Ce)?;
    let metric = partition(&student, &teacher.model, &art.data.test, RiskMode::TaskMetric)?;
    for report in [&ce, &metric] {
        emit::sorted_diff_csv(
            &out.join(format!("sorted_diff_{}.csv", report.mode.name())),
            &sorted_diffs(report),
        )?;
    }

    let aw_path = dir.join(AW_TABLE_FILE);
    if aw_path.exists() {
        let weights: Vec<f64> = emit::read_aw_table_csv(&aw_path)?.into_iter().map(|r| r.2).collect();
        emit::aw_histogram_csv(
            &out.join("aw_histogram.csv"),
            &aw_histogram(&weights, AW_HISTOGRAM_BINS)?,
        )?;
    }

    let decisions: Vec<_> = read_events(&dir.join(RUN_LOG_FILE))?
        .into_iter()
        .filter_map(|e| match e {
            Event::Decision(d) => Some(d),
            _ => None,
        })
        .collect();
    if !decisions.is_empty() {
        emit::schedule_csv(&out.join("schedule.csv"), &schedule_trace(&decisions))?;
    }

    let risk = RiskFile {
        split: "test",
        student: "best_student",
        teacher: format!("teacher checkpoint {} (best on validation)", teacher.id),
        definitions: BTreeMap::from([
            ("diff", "risk(student) - risk(teacher) per sample; diff <= 0 is student-favored"),
            ("ce", "summed cross-entropy over the sample's scored positions"),
            ("task_metric", "error rate over the sample's scored positions"),
            ("total", "tfs_deficit - sfs_advantage"),
            (
                "surpass",
                "student_surpasses when sfs_advantage >= tfs_deficit; empirical_tfs_deficit stands in for the non-computable bound",
            ),
        ]),
        ce: RiskSection::new(&ce),
        task_metric: RiskSection::new(&metric),
    };
    write_json_atomic(&out.join(RISK_FILE), &risk)?;
    Ok(risk)
}

struct MethodRuns {
    summary: SummaryRow,
    logs: Vec<PathBuf>,
}

fn summarize_method(
    root: &Path,
    task: &str,
    method: Method,
    expected: &BTreeSet<u64>,
    warnings: &mut Vec<String>,
) -> Result<MethodRuns> {
    let dirs = seed_dirs(&root.join(task).join(method.name()))?;
    let mut best: Vec<EvalRecord> = Vec::new();
    let mut logs = Vec::new();
    let mut done = BTreeSet::new();
    for (&seed, dir) in &dirs {
        if !is_complete(dir)? {
            warnings.push(format!("{}: run did not complete", dir.display()));
            continue;
        }
        let log = dir.join(RUN_LOG_FILE);
        let analysed = read_best(&log).and_then(|b| analyze_run(root, dir, seed).map(|_| b));
        match analysed {
            Ok(b) => {
                best.push(b);
                logs.push(log);
                done.insert(seed);
            }
            Err(e) => warnings.push(format!("{}: {e}", dir.display())),
        }
    }
    let expected: BTreeSet<u64> = expected.union(&dirs.keys().copied().collect()).copied().collect();
    let missing: Vec<String> = expected.difference(&done).map(u64::to_string).collect();
    let status = if dirs.is_empty() {
        RowStatus::Missing
    } else if done.is_empty() {
        RowStatus::Failed
    } else if missing.is_empty() {
        RowStatus::Ok
    } else {
        RowStatus::Partial
    };
    if status == RowStatus::Missing {
        warnings.push(format!("{task}/{}: no run directories", method.name()));
    }
    let acc: Vec<f64> = best.iter().map(|b| b.test_accuracy).collect();
    let ce: Vec<f64> = best.iter().map(|b| b.test_ce).collect();
    Ok(MethodRuns {
        summary: SummaryRow {
            task: task.to_string(),
            method: method.name().to_string(),
            n_ok: done.len(),
            n_expected: expected.len(),
            median_test_accuracy: median(&acc),
            median_test_ce: median(&ce),
            status,
            missing_seeds: missing.join(";"),
        },
        logs,
    })
}

fn reference_rows(root: &Path, task: &str, warnings: &mut Vec<String>) -> Result<Vec<ReferenceRow>> {
    let mut teacher = (Vec::new(), Vec::new());
    let mut student = (Vec::new(), Vec::new());
    for (seed, dir) in seed_dirs(&root.join(task).join("sft"))? {
        if !is_complete(&dir)? {
            warnings.push(format!("{}: supervised stage did not complete", dir.display()));
            continue;
        }
        let evaluated = load_resolved(&dir).and_then(|cfg| {
            let art = load_sft(&cfg, root, seed, true)?;
            let t = evaluate(&art.teacher.best().model, &art.data.test)?;
            let s = match &art.student_sft {
                Some(store) => Some(evaluate(&store.best().model, &art.data.test)?),
                None => None,
            };
            Ok((t, s))
        });
        match evaluated {
            Ok((t, s)) => {
                teacher.0.push(t.accuracy);
                teacher.1.push(t.mean_ce);
                if let Some(s) = s {
                    student.0.push(s.accuracy);
                    student.1.push(s.mean_ce);
                }
            }
            Err(e) => warnings.push(format!("{}: {e}", sft_dir(root, task, seed).display())),
        }
    }
    Ok([("teacher", teacher), ("student_sft", student)]
        .into_iter()
        .map(|(model, (acc, ce))| ReferenceRow {
            task: task.to_string(),
            model,
            n_seeds: acc.len(),
            median_test_accuracy: median(&acc),
            median_test_ce: median(&ce),
        })
        .collect())
}

/// Methods and seeds named by any resolved config under a task directory.
fn declared(task_dir: &Path) -> Result<(BTreeSet<Method>, BTreeSet<u64>)> {
    let mut methods = BTreeSet::new();
    let mut seeds = BTreeSet::new();
    for (_, group) in sorted_subdirs(task_dir)? {
        for dir in seed_dirs(&group)?.values() {
            if let Ok(cfg) = load_resolved(dir) {
                methods.extend(cfg.methods.iter().copied());
                seeds.extend(cfg.seeds.iter().copied());
            }
        }
    }
    Ok((methods, seeds))
}

/// Scans `root`, writes `summary.csv`, `references.csv`, `ordering_checks.csv` and every
/// completed run's `analysis/` directory. Incomplete runs become warnings, not errors.
pub fn cmd_report(root: &Path) -> Result<ReportOutcome> {
    let mut outcome = ReportOutcome::default();
    let tasks: Vec<(String, PathBuf)> = sorted_subdirs(root)?;
    let mut per_task = Vec::new();
    let mut all_methods = BTreeSet::new();
    for (task, task_dir) in &tasks {
        let (mut methods, seeds) = declared(task_dir)?;
        for (name, _) in sorted_subdirs(task_dir)? {
            if let Some(m) = Method::parse(&name) {
                methods.insert(m);
            }
        }
        all_methods.extend(methods.iter().copied());
        per_task.push((task.clone(), seeds));
    }
    let mut ok_runs = 0;
    for (task, seeds) in &per_task {
        let mut logs: BTreeMap<Method, (Option<f64>, Vec<PathBuf>)> = BTreeMap::new();
        for &method in &all_methods {
            let runs = summarize_method(root, task, method, seeds, &mut outcome.warnings)?;
            ok_runs += runs.summary.n_ok;
            logs.insert(method, (runs.summary.median_test_accuracy, runs.logs));
            outcome.summary.push(runs.summary);
        }
        outcome
            .references
            .extend(reference_rows(root, task, &mut outcome.warnings)?);
        for (better, baseline) in ORDERING_CHECKS {
            let (Some(b), Some(a)) = (logs.get(&better), logs.get(&baseline)) else {
                continue;
            };
            outcome.ordering.push(OrderingRow {
                task: task.clone(),
                better: better.name(),
                baseline: baseline.name(),
                better_median: b.0,
                baseline_median: a.0,
                holds: b.0.zip(a.0).map(|(x, y)| x >= y),
                logs: b
                    .1
                    .iter()
                    .chain(&a.1)
                    .map(|p| p.display().to_string())
                    .collect::<Vec<_>>()
                    .join(";"),
            });
        }
    }
    if ok_runs == 0 {
        return Err(LabError::MissingArtifact(format!(
            "no completed distillation run under {}",
            root.display()
        )));
    }
    emit::write_rows(&root.join(SUMMARY_FILE), &outcome.summary)?;
    emit::write_rows(&root.join(REFERENCES_FILE), &outcome.references)?;
    emit::write_rows(&root.join(ORDERING_FILE), &outcome.ordering)?;
    Ok(outcome)
}

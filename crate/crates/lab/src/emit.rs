//! CSV and plain-text writers for datasets and analysis results.

use std::fs;
use std::io::Write;
use std::path::Path;

use distill_lab_core::analysis::{HistogramBin, ScheduleTraceRow, SortedDiffRow};
use distill_lab_core::aw::AwTable;
use distill_lab_core::tasks::{ClassifDataset, SeqDataset};
use serde::Serialize;

use crate::error::{LabError, Result};

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> LabError + '_ {
    move |e| match e.into_kind() {
        csv::ErrorKind::Io(io) => LabError::io(format!("writing {}", path.display()), io),
        other => LabError::Config(format!("writing {}: {other:?}", path.display())),
    }
}

/// Writes one header row plus one row per record.
pub fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    for row in rows {
        w.serialize(row).map_err(csv_err(path))?;
    }
    w.flush()
        .map_err(|e| LabError::io(format!("writing {}", path.display()), e))
}

#[derive(Serialize)]
struct ClassifRow {
    x1: f64,
    x2: f64,
    label: usize,
}

pub fn classification_csv(path: &Path, data: &ClassifDataset) -> Result<()> {
    write_rows(
        path,
        data.inputs.iter().zip(&data.labels).map(|(x, &label)| ClassifRow {
            x1: x[0],
            x2: x[1],
            label,
        }),
    )
}

/// One sequence per line, token ids separated by single spaces.
pub fn sequences_txt(path: &Path, data: &SeqDataset) -> Result<()> {
    let mut out = String::new();
    for seq in &data.sequences {
        let line: Vec<String> = seq.iter().map(|t| t.to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    let mut f = fs::File::create(path).map_err(|e| LabError::io(format!("creating {}", path.display()), e))?;
    f.write_all(out.as_bytes())
        .map_err(|e| LabError::io(format!("writing {}", path.display()), e))
}

#[derive(Serialize)]
struct DiffRow {
    rank: usize,
    sample_id: usize,
    diff: f64,
}

pub fn sorted_diff_csv(path: &Path, rows: &[SortedDiffRow]) -> Result<()> {
    write_rows(
        path,
        rows.iter().map(|r| DiffRow {
            rank: r.rank,
            sample_id: r.sample_id,
            diff: r.diff,
        }),
    )
}

#[derive(Serialize)]
struct AwRow {
    sample_id: usize,
    #[serde(rename = "L_S")]
    student_loss: f64,
    #[serde(rename = "L_T")]
    teacher_loss: f64,
    w: f64,
}

pub fn aw_table_csv(path: &Path, table: &AwTable) -> Result<()> {
    write_rows(
        path,
        (0..table.len()).map(|i| AwRow {
            sample_id: i,
            student_loss: table.student_losses[i],
            teacher_loss: table.teacher_losses[i],
            w: table.weights[i],
        }),
    )
}

#[derive(Serialize)]
struct BinRow {
    bin_lo: f64,
    bin_hi: f64,
    count: usize,
}

pub fn aw_histogram_csv(path: &Path, bins: &[HistogramBin]) -> Result<()> {
    write_rows(
        path,
        bins.iter().map(|b| BinRow {
            bin_lo: b.lo,
            bin_hi: b.hi,
            count: b.count,
        }),
    )
}

#[derive(Serialize)]
struct TraceRow {
    phase: usize,
    candidate_id: usize,
    metric1: f64,
    metric2: f64,
    total: f64,
    chosen: u8,
}

pub fn schedule_csv(path: &Path, rows: &[ScheduleTraceRow]) -> Result<()> {
    write_rows(
        path,
        rows.iter().map(|r| TraceRow {
            phase: r.phase,
            candidate_id: r.candidate_id,
            metric1: r.metric1,
            metric2: r.metric2,
            total: r.total,
            chosen: u8::from(r.chosen),
        }),
    )
}

/// Reads back an `aw_table.csv` written by [`aw_table_csv`] as `(L_S, L_T, w)` rows.
pub fn read_aw_table_csv(path: &Path) -> Result<Vec<(f64, f64, f64)>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err(path))?;
        let field = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| LabError::Config(format!("{}: malformed row {:?}", path.display(), rec)))
        };
        rows.push((field(1)?, field(2)?, field(3)?));
    }
    Ok(rows)
}

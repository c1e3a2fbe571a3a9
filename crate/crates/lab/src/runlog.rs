//! `run_log.jsonl`: one JSON object per event of a distillation run, in the order the
//! events happened. The file carries no timestamps, so identical runs give identical
//! bytes.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use distill_lab_core::distill::{EvalRecord, Method, PhaseRecord, RunLog, StepRecord};
use distill_lab_core::scheduler::ScheduleDecision;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

pub const RUN_LOG_FILE: &str = "run_log.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Start {
        method: Method,
        seed: u64,
        total_steps: usize,
    },
    Phase(PhaseRecord),
    Decision(ScheduleDecision),
    Step(StepRecord),
    Eval(EvalRecord),
    Best(EvalRecord),
}

/// Interleaves the log's records into event order.
pub fn events(log: &RunLog, seed: u64) -> Vec<Event> {
    let mut out = Vec::with_capacity(log.steps.len() + log.evals.len() + 2 * log.phases.len() + 2);
    out.push(Event::Start {
        method: log.method,
        seed,
        total_steps: log.steps.len(),
    });
    let mut decisions = log.decisions.iter().peekable();
    let mut evals = log.evals.iter().peekable();
    let mut phases = log.phases.iter().peekable();
    for step in &log.steps {
        if let Some(p) = phases.next_if(|p| p.start_step == step.step) {
            out.push(Event::Phase(*p));
            if let Some(d) = decisions.next_if(|d| d.phase == p.phase) {
                out.push(Event::Decision(d.clone()));
            }
        }
        out.push(Event::Step(*step));
        if let Some(e) = evals.next_if(|e| e.step == step.step + 1) {
            out.push(Event::Eval(*e));
        }
    }
    out.push(Event::Best(log.best));
    out
}

pub fn write_run_log(path: &Path, log: &RunLog, seed: u64) -> Result<()> {
    let io = |e| LabError::io(format!("writing {}", path.display()), e);
    let mut w = BufWriter::new(fs::File::create(path).map_err(io)?);
    for event in events(log, seed) {
        let line =
            serde_json::to_string(&event).map_err(|e| LabError::Config(format!("serializing run log event: {e}")))?;
        w.write_all(line.as_bytes()).map_err(io)?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_events(path: &Path) -> Result<Vec<Event>> {
    let f = fs::File::open(path).map_err(|e| LabError::io(format!("reading {}", path.display()), e))?;
    BufReader::new(f)
        .lines()
        .enumerate()
        .map(|(i, line)| {
            let line = line.map_err(|e| LabError::io(format!("reading {}", path.display()), e))?;
            serde_json::from_str(&line).map_err(|e| LabError::Config(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

/// The best-evaluation record, which closes every complete log.
pub fn read_best(path: &Path) -> Result<EvalRecord> {
    read_events(path)?
        .into_iter()
        .rev()
        .find_map(|e| match e {
            Event::Best(r) => Some(r),
            _ => None,
        })
        .ok_or_else(|| LabError::Config(format!("{}: no best-evaluation record", path.display())))
}

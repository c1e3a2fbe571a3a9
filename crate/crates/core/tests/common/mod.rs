#![allow(dead_code)]

use distill_lab_core::losses::ProbTable;
use distill_lab_core::nn::{Gradients, MlpModel};
use distill_lab_core::objective::{batch_gradient, batch_loss, Objective};
use distill_lab_core::tasks::Corpus;

pub const FD_STEP: f64 = 1e-5;

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, zero when both vanish.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

pub fn analytic(model: &MlpModel, corpus: &Corpus, batch: &[usize], obj: &Objective<'_>) -> Vec<f64> {
    let mut g = Gradients::zeros_like(model);
    batch_gradient(model, corpus, batch, obj, &mut g).unwrap();
    g.flatten()
}

/// Central differences of `batch_loss` at the given flat coordinates.
pub fn numeric(model: &MlpModel, corpus: &Corpus, batch: &[usize], obj: &Objective<'_>, coords: &[usize]) -> Vec<f64> {
    let spec = model.spec();
    let base = model.flatten();
    let mut flat = base.clone();
    coords
        .iter()
        .map(|&c| {
            flat[c] = base[c] + FD_STEP;
            let up = batch_loss(&MlpModel::from_flat(&spec, &flat).unwrap(), corpus, batch, obj).unwrap();
            flat[c] = base[c] - FD_STEP;
            let down = batch_loss(&MlpModel::from_flat(&spec, &flat).unwrap(), corpus, batch, obj).unwrap();
            flat[c] = base[c];
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

/// Builds a table directly from explicit rows, one sample per entry of `lens`.
pub fn table_from_rows(rows: &[Vec<f64>], lens: &[usize], fingerprint: u64) -> ProbTable {
    let k = rows[0].len();
    let mut offsets = vec![0];
    for l in lens {
        offsets.push(offsets.last().unwrap() + l);
    }
    ProbTable::from_parts(k, rows.concat(), offsets, fingerprint).unwrap()
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

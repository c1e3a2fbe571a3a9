//! AdamW with global-norm clipping, and the cosine-with-warmup learning-rate schedule.

use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::nn::{Gradients, MlpModel};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub grad_clip_norm: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.95,
            eps: 1e-8,
            weight_decay: 0.01,
            grad_clip_norm: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    pub config: AdamWConfig,
    pub step_count: u64,
    pub first_moment: Gradients,
    pub second_moment: Gradients,
}

/// What one optimizer step did to the gradient before using it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub grad_norm: f64,
    pub clip_scale: f64,
}

impl OptimState {
    pub fn new(model: &MlpModel, config: AdamWConfig) -> Self {
        Self {
            config,
            step_count: 0,
            first_moment: Gradients::zeros_like(model),
            second_moment: Gradients::zeros_like(model),
        }
    }

    /// Zeroes both moments and the step counter.
    pub fn reset(&mut self) {
        self.step_count = 0;
        self.first_moment.fill_zero();
        self.second_moment.fill_zero();
    }

    pub fn moments_are_zero(&self) -> bool {
        self.first_moment
            .flatten()
            .iter()
            .chain(self.second_moment.flatten().iter())
            .all(|&x| x == 0.0)
    }
}

/// One bias-corrected AdamW update with decoupled weight decay.
///
/// Gradients are clipped to `grad_clip_norm` (global L2 norm) before they enter the moments.
pub fn adamw_step(model: &mut MlpModel, grads: &Gradients, state: &mut OptimState, lr: f64) -> Result<StepStats> {
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(Error::OutOfRange {
            what: "learning rate",
            value: lr,
        });
    }
    if !grads.matches(model) || !state.first_moment.matches(model) {
        return Err(Error::Shape {
            what: "optimizer buffers",
            expected: model.param_count(),
            got: grads.flatten().len(),
        });
    }
    if let Some(block) = grads.first_non_finite_block() {
        return Err(Error::NonFinite {
            what: alloc::format!("gradient of {block}"),
        });
    }

    let cfg = state.config;
    let grad_norm = grads.global_norm();
    let clip_scale = if cfg.grad_clip_norm > 0.0 && grad_norm > cfg.grad_clip_norm {
        cfg.grad_clip_norm / grad_norm
    } else {
        1.0
    };

    state.step_count += 1;
    let t = state.step_count as f64;
    let bias1 = 1.0 - libm::pow(cfg.beta1, t);
    let bias2 = 1.0 - libm::pow(cfg.beta2, t);

    let blocks = model.n_layers();
    for l in 0..blocks {
        update_block(
            &mut model.weights_mut()[l],
            &grads.weights[l],
            &mut state.first_moment.weights[l],
            &mut state.second_moment.weights[l],
            clip_scale,
            lr,
            bias1,
            bias2,
            &cfg,
        );
        update_block(
            &mut model.biases_mut()[l],
            &grads.biases[l],
            &mut state.first_moment.biases[l],
            &mut state.second_moment.biases[l],
            clip_scale,
            lr,
            bias1,
            bias2,
            &cfg,
        );
    }
    Ok(StepStats { grad_norm, clip_scale })
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn update_block(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    clip_scale: f64,
    lr: f64,
    bias1: f64,
    bias2: f64,
    cfg: &AdamWConfig,
) {
    for i in 0..params.len() {
        let g = grads[i] * clip_scale;
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = m[i] / bias1;
        let v_hat = v[i] / bias2;
        params[i] -= lr * (m_hat / (libm::sqrt(v_hat) + cfg.eps) + cfg.weight_decay * params[i]);
    }
}

/// Linear warmup to `peak_lr`, then half-cosine decay to zero at `total_steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub peak_lr: f64,
    pub total_steps: usize,
    pub warmup_ratio: f64,
}

impl LrSchedule {
    pub fn new(peak_lr: f64, total_steps: usize, warmup_ratio: f64) -> Result<Self> {
        if !(peak_lr > 0.0 && peak_lr.is_finite()) {
            return Err(Error::OutOfRange {
                what: "peak learning rate",
                value: peak_lr,
            });
        }
        if total_steps == 0 {
            return Err(Error::OutOfRange {
                what: "schedule length",
                value: 0.0,
            });
        }
        if !(0.0..1.0).contains(&warmup_ratio) {
            return Err(Error::OutOfRange {
                what: "warmup ratio",
                value: warmup_ratio,
            });
        }
        Ok(Self {
            peak_lr,
            total_steps,
            warmup_ratio,
        })
    }

    /// `round(warmup_ratio · total_steps)`, capped so at least one decay step remains.
    pub fn warmup_steps(&self) -> usize {
        let w = libm::round(self.warmup_ratio * self.total_steps as f64) as usize;
        w.min(self.total_steps - 1)
    }

    pub fn lr_at(&self, step: usize) -> Result<f64> {
        if step > self.total_steps {
            return Err(Error::OutOfRange {
                what: "schedule step",
                value: step as f64,
            });
        }
        let warmup = self.warmup_steps();
        if step < warmup {
            return Ok(self.peak_lr * step as f64 / warmup as f64);
        }
        let progress = (step - warmup) as f64 / (self.total_steps - warmup) as f64;
        Ok(self.peak_lr * 0.5 * (1.0 + libm::cos(PI * progress)))
    }
}

//! Teacher–student distillation on small dense networks.
//!
//! The crate is `no_std` (it needs `alloc`) and does no I/O. It provides:
//!
//! - [`nn`], [`optim`]: MLPs with exact backpropagation, AdamW, cosine-with-warmup schedules.
//! - [`tasks`]: seeded synthetic datasets and the flat [`tasks::Corpus`] layout.
//! - [`losses`], [`objective`]: softmax, cross-entropy, forward/reverse KL, TAID targets and
//!   the per-batch training objective.
//! - [`checkpoints`]: supervised training that snapshots a model at evenly spaced steps.
//! - [`scheduler`]: per-phase teacher-checkpoint selection and the fixed progressive schedule.
//! - [`aw`]: sample-wise adaptive weights from frozen reference losses.
//! - [`distill`]: the phase-based driver shared by every distillation method.
//! - [`analysis`]: student/teacher-favored partitions and plot data.
//!
//! All arithmetic is `f64`. Given a seed and a configuration every routine is
//! bit-for-bit deterministic.

#![no_std]

extern crate alloc;

pub mod analysis;
pub mod aw;
pub mod checkpoints;
pub mod distill;
pub mod error;
pub mod losses;
pub mod nn;
pub mod objective;
pub mod optim;
pub mod rng;
pub mod scheduler;
pub mod tasks;

pub use error::{Error, Result};

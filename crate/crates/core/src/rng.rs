//! Seeded random streams.
//!
//! Every consumer of randomness draws from its own ChaCha stream derived from the
//! experiment seed, so adding draws in one place never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    TrainData = 1,
    ValidationData = 2,
    TestData = 3,
    TeacherInit = 4,
    StudentInit = 5,
    TeacherBatches = 6,
    StudentSftBatches = 7,
    DistillBatches = 8,
    Scratch = 9,
}

pub fn stream(seed: u64, stream: Stream) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

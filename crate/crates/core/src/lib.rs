//! Symbolic reward machines: automata whose transitions carry linear real
//! arithmetic guards over raw environment state, together with the learners
//! that exploit them and the constraint-based engines that infer them.

pub mod envs;
pub mod eval;
pub mod infer;
pub mod learn;
pub mod logic;
pub mod lsrm;
pub mod run;
pub mod smt;
pub mod srm;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent random streams derived from one run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Agent = 1,
    Env = 2,
    Eval = 3,
}

pub fn seeded(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

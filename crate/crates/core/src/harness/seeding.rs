use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Named random streams derived from one master seed.
///
/// Every stream is a ChaCha8 generator keyed by the master seed (expanded the
/// same way as `seed_from_u64`) and given its own stream id: `env` = 1,
/// `policy` = 2, `pso` = 3, `buffer` = 4. Evaluation uses id 5.
///
/// * `env`: episode resets.
/// * `policy`: network init, the epsilon draw, random actions, policy samples.
/// * `pso`: the swarm planner.
/// * `buffer`: minibatch indices and the noise used inside updates.
#[derive(Debug, Clone)]
pub struct Streams {
    pub env: ChaCha8Rng,
    pub policy: ChaCha8Rng,
    pub pso: ChaCha8Rng,
    pub buffer: ChaCha8Rng,
}

pub const EVAL_STREAM: u64 = 5;

/// Generator for stream `id` of `seed`.
pub fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

impl Streams {
    pub fn new(seed: u64) -> Self {
        Self { env: stream(seed, 1), policy: stream(seed, 2), pso: stream(seed, 3), buffer: stream(seed, 4) }
    }
}

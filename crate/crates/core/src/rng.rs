use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent, reproducible random streams derived from one user seed.
///
/// Each consumer (input signal, measurement noise, initialization, shuffling,
/// gate noise) gets its own stream so that changing one never perturbs another.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Stream {
    Input = 1,
    Noise = 2,
    Init = 3,
    Shuffle = 4,
    GateNoise = 5,
    Toy = 6,
}

pub(crate) fn stream(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

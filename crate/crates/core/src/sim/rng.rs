use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent random streams, one per concern, all derived from the
/// scenario seed.
#[derive(Clone, Debug)]
pub struct Streams {
    pub arrivals: ChaCha8Rng,
    pub sizes: ChaCha8Rng,
    pub bandwidth: ChaCha8Rng,
    pub failures: ChaCha8Rng,
    pub steal: ChaCha8Rng,
    pub store: ChaCha8Rng,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(id);
    r
}

impl Streams {
    pub fn new(seed: u64) -> Self {
        Streams {
            arrivals: stream(seed, 1),
            sizes: stream(seed, 2),
            bandwidth: stream(seed, 3),
            failures: stream(seed, 4),
            steal: stream(seed, 5),
            store: stream(seed, 6),
        }
    }
}

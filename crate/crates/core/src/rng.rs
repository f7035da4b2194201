//! Seeded randomness. Every stochastic run takes a `PfpRng` derived from a
//! recorded seed so results replay exactly; independent runs split off
//! their own streams by index.

use rand::SeedableRng;

/// The generator used throughout: seedable and stream-splittable.
pub type PfpRng = rand_chacha::ChaCha8Rng;

pub fn seeded(seed: u64) -> PfpRng {
    PfpRng::seed_from_u64(seed)
}

/// Independent stream `index` of the generator seeded with `seed`.
pub fn stream(seed: u64, index: u64) -> PfpRng {
    let mut rng = PfpRng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

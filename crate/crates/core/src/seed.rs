//! Deterministic seed derivation.
//!
//! Every random consumer (trajectories, clutter, noise, symbols, network
//! initialization, ...) gets its own stream derived from one root seed, so a
//! single number reproduces a whole experiment and consumers never share
//! state.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub type Rng = ChaCha12Rng;

/// Consumer tags. The numeric values are part of the reproducibility
/// contract and must not be reordered.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Trajectory = 1,
    Clutter = 2,
    Noise = 3,
    Symbols = 4,
    Scatterers = 5,
    InitialState = 6,
    ModelInit = 7,
    Shuffle = 8,
    BeamPointing = 9,
    Episode = 10,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed of `stream`, instance `index`, from `root`.
pub fn derive(root: u64, stream: Stream, index: u64) -> u64 {
    let a = splitmix64(root ^ splitmix64(stream as u64));
    splitmix64(a ^ splitmix64(index.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

pub fn rng(root: u64, stream: Stream, index: u64) -> Rng {
    Rng::seed_from_u64(derive(root, stream, index))
}

pub fn rng_from(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

//! Seeded random streams, one per sampler update block.
//!
//! Every block of the sampler draws from its own ChaCha stream keyed by the
//! chain seed. Disabling one block therefore leaves the draws of every other
//! block untouched, which is what makes the fixed-state chain reproduce the
//! emission traces of a full chain with the other updates switched off.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type ChainRng = ChaCha8Rng;

/// Update blocks that own a random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    Init,
    Rho,
    Transition,
    States,
    Subsample,
    Mu,
    Sigma2,
    /// Random-walk Metropolis for the coefficients of one state.
    Beta(usize),
}

impl Block {
    fn stream_id(self) -> u64 {
        match self {
            Block::Init => 0,
            Block::Rho => 1,
            Block::Transition => 2,
            Block::States => 3,
            Block::Subsample => 4,
            Block::Mu => 5,
            Block::Sigma2 => 6,
            Block::Beta(j) => 64 + j as u64,
        }
    }
}

/// Generator for `block` under chain seed `seed`.
pub fn block_rng(seed: u64, block: Block) -> ChainRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block.stream_id());
    rng
}

/// Derives an independent child seed from a master seed and a cell index (SplitMix64).
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

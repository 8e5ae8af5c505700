use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Split-stream RNG contract: path `i`'s generator is a pure function of
/// `(seed, i)`, so simulations parallelize across paths with results
/// independent of scheduling.
pub fn path_rng(seed: u64, path_id: u64) -> ChaCha12Rng {
    let mut state = seed ^ (0x9E37_79B9_7F4A_7C15u64.wrapping_mul(path_id.wrapping_add(1)));
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha12Rng::from_seed(key)
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

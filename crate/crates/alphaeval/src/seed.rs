//! Deterministic seed derivation.
//!
//! Every random draw in a run flows from one root seed. Sub-seeds are
//! derived by hashing a purpose tag and an index, so adding or reordering
//! consumers never shifts another consumer's stream.

/// splitmix64 step; the standard 64-bit mixer.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a sub-seed from `root` for the given purpose tag and index.
pub fn derive(root: u64, purpose: &str, index: u64) -> u64 {
    // FNV-1a over the tag, folded into the root before mixing.
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for b in purpose.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    let mut state = root ^ h;
    let _ = splitmix64(&mut state);
    state = state.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    splitmix64(&mut state)
}

//! Platform-stable 64-bit hashing shared by every index structure.
//!
//! All hashes are FNV-1a over the raw bytes followed by the splitmix64
//! finalizer, so values are identical across runs, platforms and Rust
//! versions. Persisted indices and model files depend on this.

use std::hash::Hasher;

use fnv::FnvHasher;

/// Seed mixed into every hash produced by this crate unless a caller
/// supplies its own.
pub const DEFAULT_SEED: u64 = 0x5EED_C0DE_2025_0001;

/// Byte used to join tokens when hashing a multi-token gram. It cannot
/// appear inside a token produced by any [`crate::TokenizerSpec`].
pub const JOIN: u8 = 0x1f;

#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn hash_bytes(bytes: &[u8], seed: u64) -> u64 {
    let mut h = FnvHasher::with_key(0xcbf2_9ce4_8422_2325 ^ splitmix64(seed));
    h.write(bytes);
    splitmix64(h.finish())
}

pub fn hash_str(s: &str, seed: u64) -> u64 {
    hash_bytes(s.as_bytes(), seed)
}

/// Hash of a token window; tokens are joined with [`JOIN`].
pub fn hash_tokens<S: AsRef<str>>(tokens: &[S], seed: u64) -> u64 {
    let mut h = FnvHasher::with_key(0xcbf2_9ce4_8422_2325 ^ splitmix64(seed));
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            h.write(&[JOIN]);
        }
        h.write(t.as_ref().as_bytes());
    }
    splitmix64(h.finish())
}

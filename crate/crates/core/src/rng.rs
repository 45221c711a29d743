//! Keyed random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 stream whose 256-bit
//! seed is the SHA-256 of a tuple of labelled key parts. Streams for
//! different keys are independent, so results never depend on iteration or
//! scheduling order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// One component of a stream key.
#[derive(Debug, Clone, Copy)]
pub enum KeyPart<'a> {
    U64(u64),
    Str(&'a str),
}

impl From<u64> for KeyPart<'_> {
    fn from(v: u64) -> Self {
        KeyPart::U64(v)
    }
}

impl<'a> From<&'a str> for KeyPart<'a> {
    fn from(v: &'a str) -> Self {
        KeyPart::Str(v)
    }
}

fn digest(domain: &str, parts: &[KeyPart<'_>]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update((domain.len() as u64).to_le_bytes());
    h.update(domain.as_bytes());
    for p in parts {
        match p {
            KeyPart::U64(v) => {
                h.update([0u8]);
                h.update(v.to_le_bytes());
            }
            KeyPart::Str(s) => {
                h.update([1u8]);
                h.update((s.len() as u64).to_le_bytes());
                h.update(s.as_bytes());
            }
        }
    }
    h.finalize().into()
}

/// Random stream for `domain` keyed by `parts`.
pub fn stream(domain: &str, parts: &[KeyPart<'_>]) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(digest(domain, parts))
}

/// Derives a child 64-bit seed, e.g. the per-repetition seed from a base seed.
pub fn derive_seed(domain: &str, parts: &[KeyPart<'_>]) -> u64 {
    let d = digest(domain, parts);
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

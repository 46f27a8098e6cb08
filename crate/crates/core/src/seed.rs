//! Stable seed derivation.
//!
//! Every random stream in the simulator is keyed by a master seed plus a
//! path of labels (node id, cluster id, iteration, ...). Derivation does not
//! depend on evaluation order, so parallel and sequential runs agree.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// One component of a seed derivation path.
#[derive(Debug, Clone, Copy)]
pub enum SeedPart<'a> {
    Str(&'a str),
    Num(u64),
}

impl<'a> From<&'a str> for SeedPart<'a> {
    fn from(s: &'a str) -> Self {
        SeedPart::Str(s)
    }
}

impl<'a> From<&'a String> for SeedPart<'a> {
    fn from(s: &'a String) -> Self {
        SeedPart::Str(s.as_str())
    }
}

impl From<u64> for SeedPart<'_> {
    fn from(n: u64) -> Self {
        SeedPart::Num(n)
    }
}

impl From<usize> for SeedPart<'_> {
    fn from(n: usize) -> Self {
        SeedPart::Num(n as u64)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv_bytes(mut h: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Derive a child seed from `master` and a label path.
pub fn derive_seed(master: u64, parts: &[SeedPart<'_>]) -> u64 {
    let mut h = fnv_bytes(FNV_OFFSET, &master.to_le_bytes());
    for part in parts {
        // Tag bytes keep ("1", 1) and (1, "1") apart.
        h = match part {
            SeedPart::Str(s) => {
                let h = fnv_bytes(h, &[0x53]);
                let h = fnv_bytes(h, &(s.len() as u64).to_le_bytes());
                fnv_bytes(h, s.as_bytes())
            }
            SeedPart::Num(n) => fnv_bytes(fnv_bytes(h, &[0x4e]), &n.to_le_bytes()),
        };
    }
    splitmix64(h)
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

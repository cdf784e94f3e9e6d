//! Seeded normal generation with fixed stream consumption.
//!
//! Sampling addresses the ChaCha word stream by position: sample `k` of a
//! batch always starts at word `k * words_per_sample(r)`. Box-Muller is used
//! instead of a ziggurat because it consumes a fixed number of words per
//! draw, which is what makes the addressing scheme exact. Disjoint sample
//! ranges therefore reproduce the sequential batch bit for bit.

use rand_chacha::ChaCha12Rng;
use rand_core::{RngCore, SeedableRng};

/// ChaCha 32-bit words consumed per Box-Muller pair (two `next_u64` calls).
const WORDS_PER_PAIR: u128 = 4;

/// Stream words consumed by one sample of `normals` standard normals.
pub(crate) fn words_per_sample(normals: usize) -> u128 {
    (normals as u128).div_ceil(2) * WORDS_PER_PAIR
}

pub(crate) fn seeded(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

#[inline]
fn unit_open(bits: u64) -> f64 {
    // (0, 1]; never 0, so the logarithm below stays finite.
    ((bits >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[inline]
fn unit_half_open(bits: u64) -> f64 {
    // [0, 1)
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Fill `out` with independent standard normals.
///
/// Consumes exactly `words_per_sample(out.len())` words from `rng` no matter
/// which values are drawn; an odd tail discards the second member of its pair.
pub(crate) fn fill_standard_normal(rng: &mut impl RngCore, out: &mut [f64]) {
    for pair in out.chunks_mut(2) {
        let u1 = unit_open(rng.next_u64());
        let u2 = unit_half_open(rng.next_u64());
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = std::f64::consts::TAU * u2;
        pair[0] = radius * angle.cos();
        if pair.len() == 2 {
            pair[1] = radius * angle.sin();
        }
    }
}

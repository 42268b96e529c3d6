//! Counter-based randomness.
//!
//! Values are pure functions of a seed and an integer key path, so any
//! evaluation order (and any thread count) produces the same numbers.
//! Per-path Brownian increments use ChaCha8 with one stream per path.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut x: u64) -> u64 {
    x = x.wrapping_add(GOLDEN);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Hash of `(seed, parts...)`; distinct key paths give independent streams.
pub fn key(seed: u64, parts: &[u64]) -> u64 {
    let mut h = mix64(seed ^ 0x6A09_E667_F3BC_C909);
    for (i, &p) in parts.iter().enumerate() {
        h = mix64(h ^ mix64(p.wrapping_add((i as u64 + 1).wrapping_mul(GOLDEN))));
    }
    h
}

/// Uniform in `[0, 1)`.
pub fn uniform(seed: u64, parts: &[u64]) -> f64 {
    (key(seed, parts) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn uniform_open(h: u64) -> f64 {
    ((h >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal pair via Box–Muller on two hashed uniforms.
pub fn normal_pair(seed: u64, parts: &[u64]) -> (f64, f64) {
    let h = key(seed, parts);
    let u1 = uniform_open(h);
    let u2 = uniform_open(mix64(h ^ GOLDEN));
    let r = (-2.0 * u1.ln()).sqrt();
    let t = std::f64::consts::TAU * u2;
    (r * t.cos(), r * t.sin())
}

pub fn normal(seed: u64, parts: &[u64]) -> f64 {
    normal_pair(seed, parts).0
}

/// Circular complex Gaussian with `E|z|² = 1`.
pub fn complex_normal(seed: u64, parts: &[u64]) -> Complex64 {
    let (a, b) = normal_pair(seed, parts);
    Complex64::new(a, b) * std::f64::consts::FRAC_1_SQRT_2
}

/// Integer uniform in `lo..=hi`.
pub fn int_in(seed: u64, parts: &[u64], lo: usize, hi: usize) -> usize {
    debug_assert!(lo <= hi);
    let span = (hi - lo + 1) as u64;
    lo + (key(seed, parts) % span) as usize
}

/// ChaCha8 generator dedicated to one path of one experiment.
pub fn path_rng(seed: u64, experiment: u64, path: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(key(seed, &[experiment]));
    rng.set_stream(path);
    rng
}

//! Seeded sampling for the identity suites.
//!
//! A fixed 64-bit linear congruential generator keeps sample points
//! reproducible across runs and across language bindings:
//! `state <- state * 6364136223846793005 + 1442695040888963407`, with the
//! top 53 bits mapped to a uniform double in `[0, 1)`.

const LCG_MUL: u64 = 6364136223846793005;
const LCG_ADD: u64 = 1442695040888963407;

/// Deterministic 64-bit LCG.
#[derive(Debug, Clone)]
pub struct Lcg64 {
    state: u64,
}

impl Lcg64 {
    pub fn new(seed: u64) -> Lcg64 {
        Lcg64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_mul(LCG_MUL).wrapping_add(LCG_ADD);
        self.state
    }

    /// Uniform in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + self.next_f64() * (hi - lo)
    }

    /// Uniform magnitude in `[lo, hi)` with random sign.
    pub fn signed_magnitude(&mut self, lo: f64, hi: f64) -> f64 {
        let mag = self.uniform(lo, hi);
        if self.next_u64() & 1 == 0 {
            mag
        } else {
            -mag
        }
    }

    pub fn pick(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }
}

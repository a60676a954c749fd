//! Counter-addressed common random numbers.
//!
//! Every variate used by a simulation is a pure function of the seed and an
//! address `(iteration, lane, sa_iteration, path, step)`. Nothing is drawn from
//! a shared sequential generator, so results are identical whatever order the
//! paths are evaluated in and however many threads evaluate them.
//!
//! `lane` is normally the period whose subproblem is being solved; the
//! reserved lanes [`GUARD_LANE`] and [`EVAL_LANE`] hold the start-of-sweep
//! simulation (shared by the acceptance guard) and out-of-sample evaluation.
//! `step` is the within-path period `j` whose shock `z_{j+1}` is being drawn.
//! Because the step index is absolute, a tail re-simulation that starts at
//! period `t` sees exactly the shocks a full path would see from `t` onward.

use rand::RngCore;

/// Lane holding the sweep's guard stream (full paths and every guard comparison).
pub const GUARD_LANE: u32 = u32::MAX;
/// Lane used for out-of-sample evaluation of finished policies.
pub const EVAL_LANE: u32 = u32::MAX - 1;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[inline]
fn absorb(h: u64, word: u64) -> u64 {
    mix64(h ^ mix64(word.wrapping_add(GOLDEN_GAMMA)))
}

/// Seeded source of common random numbers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CrnStream {
    seed: u64,
}

impl CrnStream {
    pub fn new(seed: u64) -> Self {
        CrnStream { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The block of variates shared by every path under one
    /// `(iteration, lane, sa_iteration)` address prefix.
    pub fn block(&self, iteration: u32, lane: u32, sa_iteration: u32) -> CrnBlock {
        let mut h = mix64(self.seed ^ 0x6a09_e667_f3bc_c908);
        h = absorb(h, iteration as u64);
        h = absorb(h, lane as u64);
        h = absorb(h, sa_iteration as u64);
        CrnBlock { key: h }
    }

    pub fn guard_block(&self, iteration: u32) -> CrnBlock {
        self.block(iteration, GUARD_LANE, 0)
    }

    pub fn eval_block(&self) -> CrnBlock {
        self.block(0, EVAL_LANE, 0)
    }
}

/// An address prefix; hands out per-(path, step) draw streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CrnBlock {
    key: u64,
}

impl CrnBlock {
    #[inline]
    pub fn draws(&self, path: u32, step: u32) -> Draws {
        let word = ((path as u64) << 32) | step as u64;
        Draws {
            state: absorb(self.key, word),
        }
    }
}

/// Variates for one `(path, step)` address: a SplitMix64 sequence whose
/// i-th output is `mix(base + i * gamma)`.
#[derive(Debug, Clone)]
pub struct Draws {
    state: u64,
}

impl Draws {
    /// Uniform on the open interval (0, 1).
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }
}

impl RngCore for Draws {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_address_same_variates() {
        let crn = CrnStream::new(42);
        let mut a = crn.block(3, 1, 7).draws(11, 2);
        let mut b = crn.block(3, 1, 7).draws(11, 2);
        for _ in 0..16 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn address_components_all_matter() {
        let crn = CrnStream::new(42);
        let base = crn.block(1, 2, 3).draws(4, 5).next_u64();
        let variants = [
            CrnStream::new(43).block(1, 2, 3).draws(4, 5).next_u64(),
            crn.block(0, 2, 3).draws(4, 5).next_u64(),
            crn.block(1, 0, 3).draws(4, 5).next_u64(),
            crn.block(1, 2, 0).draws(4, 5).next_u64(),
            crn.block(1, 2, 3).draws(0, 5).next_u64(),
            crn.block(1, 2, 3).draws(4, 0).next_u64(),
            // swapping path and step must not collide
            crn.block(1, 2, 3).draws(5, 4).next_u64(),
        ];
        for v in variants {
            assert_ne!(v, base);
        }
    }

    #[test]
    fn uniforms_in_open_unit_interval_with_sane_moments() {
        let crn = CrnStream::new(7);
        let block = crn.block(0, 0, 0);
        let n = 200_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for l in 0..n {
            let u = block.draws(l, 0).uniform();
            assert!(u > 0.0 && u < 1.0);
            sum += u;
            sum_sq += u * u;
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        assert!((mean - 0.5).abs() < 0.003, "mean {mean}");
        assert!((var - 1.0 / 12.0).abs() < 0.002, "var {var}");
    }

    #[test]
    fn neighbouring_paths_are_uncorrelated() {
        let block = CrnStream::new(1).block(0, 0, 0);
        let n = 100_000u32;
        let (mut sx, mut sy, mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for l in 0..n {
            let x = block.draws(l, 0).uniform();
            let y = block.draws(l + 1, 0).uniform();
            sx += x;
            sy += y;
            sxy += x * y;
            sxx += x * x;
            syy += y * y;
        }
        let nf = n as f64;
        let cov = sxy / nf - sx / nf * sy / nf;
        let corr = cov / ((sxx / nf - (sx / nf).powi(2)) * (syy / nf - (sy / nf).powi(2))).sqrt();
        assert!(corr.abs() < 0.015, "corr {corr}");
    }
}

//! Deterministic, platform-independent random numbers.
//!
//! The generator is xoshiro256** (Blackman & Vigna), seeded by running
//! SplitMix64 from a starting point derived from `(seed, stream)`:
//!
//! ```text
//! start = seed + fmix64(stream)            (wrapping)
//! s[k]  = splitmix64_next(start)  for k in 0..4
//! ```
//!
//! Every derived quantity below uses only integer arithmetic or exact
//! float conversions, so a given `(seed, stream)` yields the same draws
//! on every platform.

use serde::{Deserialize, Serialize};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Seed material for one independent random stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub stream: u64,
}

impl RngState {
    pub fn new(seed: u64, stream: u64) -> Self {
        RngState { seed, stream }
    }

    pub fn generator(self) -> DetRng {
        DetRng::from_state(self)
    }
}

/// Stream for `(epoch, sample_index)`: `(epoch << 32) ^ sample_index`.
///
/// Injective while both values are below 2^32.
pub fn derive_rng(global_seed: u64, epoch: u64, sample_index: u64) -> RngState {
    let stream = (epoch << 32) ^ sample_index;
    RngState { seed: global_seed, stream }
}

/// MurmurHash3 64-bit finalizer, a bijection on u64.
fn fmix64(mut x: u64) -> u64 {
    x ^= x >> 33;
    x = x.wrapping_mul(0xFF51_AFD7_ED55_8CCD);
    x ^= x >> 33;
    x = x.wrapping_mul(0xC4CE_B9FE_1A85_EC53);
    x ^= x >> 33;
    x
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN_GAMMA);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// xoshiro256** generator.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DetRng {
    s: [u64; 4],
}

impl DetRng {
    pub fn from_state(state: RngState) -> Self {
        let mut sm = state.seed.wrapping_add(fmix64(state.stream));
        let mut s = [0u64; 4];
        for word in &mut s {
            *word = splitmix64(&mut sm);
        }
        // An all-zero state is a fixed point; splitmix cannot emit four zeros
        // in a row, but guard anyway.
        if s == [0; 4] {
            s[0] = GOLDEN_GAMMA;
        }
        DetRng { s }
    }

    pub fn seeded(seed: u64) -> Self {
        Self::from_state(RngState::new(seed, 0))
    }

    pub fn next_u64(&mut self) -> u64 {
        let result = self.s[1].wrapping_mul(5).rotate_left(7).wrapping_mul(9);
        let t = self.s[1] << 17;
        self.s[2] ^= self.s[0];
        self.s[3] ^= self.s[1];
        self.s[1] ^= self.s[2];
        self.s[0] ^= self.s[3];
        self.s[2] ^= t;
        self.s[3] = self.s[3].rotate_left(45);
        result
    }

    /// Uniform integer in `0..bound` (Lemire's nearly-divisionless method, unbiased).
    ///
    /// Panics if `bound` is zero.
    pub fn below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "below() needs a positive bound");
        let mut m = (self.next_u64() as u128) * (bound as u128);
        let mut low = m as u64;
        if low < bound {
            let threshold = bound.wrapping_neg() % bound;
            while low < threshold {
                m = (self.next_u64() as u128) * (bound as u128);
                low = m as u64;
            }
        }
        (m >> 64) as u64
    }

    pub fn below_usize(&mut self, bound: usize) -> usize {
        self.below(bound as u64) as usize
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    /// Standard normal deviate via Box-Muller.
    ///
    /// Uses `ln`/`cos`, so the last bit may differ across libm
    /// implementations. Augmentation never calls this.
    pub fn standard_normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below_usize(i + 1);
            items.swap(i, j);
        }
    }
}

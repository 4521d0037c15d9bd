//! Counter-based random number generation.
//!
//! Every stochastic routine in this crate draws from [`Philox`], the
//! Philox4x32-10 generator of Salmon et al. (SC'11). A generator is fully
//! determined by a 64-bit key and a 64-bit stream id; the 128-bit counter
//! block is `[block_lo, block_hi, stream_lo, stream_hi]`, so independent
//! chains, restarts, and minibatches get independent streams without any
//! shared state. Output is identical on every platform.
//!
//! Layout of one block:
//!
//! ```text
//! counter = (block as u32, (block >> 32) as u32, stream as u32, (stream >> 32) as u32)
//! key     = (key as u32, (key >> 32) as u32)
//! output  = philox4x32_10(counter, key)   // four u32 words, consumed in order
//! ```
//!
//! `next_u64` concatenates two consecutive words as `lo | hi << 32`.
//! Uniform doubles take the top 53 bits of `next_u64`.

use rand_core::{RngCore, SeedableRng};

const MUL0: u32 = 0xD251_1F53;
const MUL1: u32 = 0xCD9E_8D57;
const WEYL0: u32 = 0x9E37_79B9;
const WEYL1: u32 = 0xBB67_AE85;

#[inline]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = u64::from(a) * u64::from(b);
    ((p >> 32) as u32, p as u32)
}

/// The raw Philox4x32 bijection with 10 rounds.
pub fn philox4x32_10(ctr: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let mut c = ctr;
    let mut k = key;
    for round in 0..10 {
        if round > 0 {
            k[0] = k[0].wrapping_add(WEYL0);
            k[1] = k[1].wrapping_add(WEYL1);
        }
        let (hi0, lo0) = mulhilo(MUL0, c[0]);
        let (hi1, lo1) = mulhilo(MUL1, c[2]);
        c = [hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0];
    }
    c
}

/// SplitMix64 finalizer; used to derive child seeds from `(seed, tag)`.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed. The rule is fixed: `mix64(seed ^ mix64(tag))`.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    mix64(seed ^ mix64(tag))
}

/// Philox4x32-10 stream generator.
#[derive(Clone, Debug)]
pub struct Philox {
    key: [u32; 2],
    stream: u64,
    block: u64,
    buf: [u32; 4],
    idx: usize,
}

impl Philox {
    pub fn new(key: u64, stream: u64) -> Self {
        Self {
            key: [key as u32, (key >> 32) as u32],
            stream,
            block: 0,
            buf: [0; 4],
            idx: 4,
        }
    }

    fn refill(&mut self) {
        let ctr = [
            self.block as u32,
            (self.block >> 32) as u32,
            self.stream as u32,
            (self.stream >> 32) as u32,
        ];
        self.buf = philox4x32_10(ctr, self.key);
        self.block = self.block.wrapping_add(1);
        self.idx = 0;
    }

    /// Uniform in `[0, 1)` with 53 bits of resolution.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in the open interval `(0, 1)`.
    #[inline]
    pub fn uniform_open(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n` (Lemire's multiply-shift with rejection).
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        loop {
            let x = self.next_u64();
            let m = u128::from(x) * u128::from(n);
            let lo = m as u64;
            if lo >= n.wrapping_neg() % n {
                return (m >> 64) as u64;
            }
        }
    }
}

impl RngCore for Philox {
    fn next_u32(&mut self) -> u32 {
        if self.idx >= 4 {
            self.refill();
        }
        let v = self.buf[self.idx];
        self.idx += 1;
        v
    }

    fn next_u64(&mut self) -> u64 {
        let lo = u64::from(self.next_u32());
        let hi = u64::from(self.next_u32());
        lo | (hi << 32)
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(4) {
            let w = self.next_u32().to_le_bytes();
            chunk.copy_from_slice(&w[..chunk.len()]);
        }
    }
}

impl SeedableRng for Philox {
    type Seed = [u8; 16];

    fn from_seed(seed: Self::Seed) -> Self {
        let key = u64::from_le_bytes(seed[..8].try_into().unwrap());
        let stream = u64::from_le_bytes(seed[8..].try_into().unwrap());
        Self::new(key, stream)
    }

    fn seed_from_u64(state: u64) -> Self {
        Self::new(state, 0)
    }
}

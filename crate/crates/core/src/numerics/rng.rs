//! Counter-based random streams.
//!
//! A stream is addressed by `(seed, stream_id, position)`. The generator is
//! ChaCha8 keyed by `seed` with `stream_id` as the ChaCha stream (nonce), so
//! every draw is a pure function of those three numbers and independent
//! streams never overlap. Consumers derive sub-streams by name or index
//! instead of sharing one sequence, so adding a consumer never perturbs the
//! draws seen by another.
//!
//! Position accounting (one unit = one 64-bit word):
//! - `uniform01` advances by 1,
//! - `standard_normal` advances by 2 (Box–Muller, cosine branch only),
//! - `fill_standard_normal` uses the ziggurat method and advances by a
//!   data-dependent amount, one word per output in the common case.

use rand::{RngCore, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use rand_chacha::ChaCha8Rng;

const TWO_POW_53: f64 = 9_007_199_254_740_992.0;

/// Kind of scalar drawn by [`RngStream::draw`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DrawKind {
    Uniform01,
    StandardNormal,
}

#[derive(Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl std::fmt::Debug for RngStream {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RngStream")
            .field("seed", &self.seed)
            .field("stream_id", &self.stream_id)
            .field("position", &self.position())
            .finish()
    }
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        key[8..16].copy_from_slice(&splitmix64(seed).to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
        }
    }

    /// Stream whose id is the FNV-1a hash of `name` (e.g. `"gfb"`, `"noise"`).
    pub fn named(seed: u64, name: &str) -> Self {
        Self::new(seed, fnv1a64(name.as_bytes()))
    }

    /// Child stream keyed by `key`, starting at position 0. Does not advance
    /// `self`.
    pub fn derive(&self, key: u64) -> Self {
        Self::new(
            self.seed,
            splitmix64(self.stream_id ^ splitmix64(key.wrapping_add(0x632B_E59B_D9B4_E019))),
        )
    }

    /// Child stream keyed by a label.
    pub fn derive_named(&self, label: &str) -> Self {
        self.derive(fnv1a64(label.as_bytes()))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Number of 64-bit words consumed so far.
    pub fn position(&self) -> u64 {
        (self.rng.get_word_pos() / 2) as u64
    }

    pub fn set_position(&mut self, position: u64) {
        self.rng.set_word_pos(u128::from(position) * 2);
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 bits of resolution.
    pub fn uniform01(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / TWO_POW_53
    }

    /// Uniform on `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform01()
    }

    /// Uniform integer in `0..n` (n > 0), by multiply-shift.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        ((u128::from(self.next_u64()) * u128::from(n)) >> 64) as u64
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform01() < p
    }

    pub fn standard_normal(&mut self) -> f64 {
        let (r, angle) = self.box_muller_polar();
        r * angle.cos()
    }

    pub fn draw(&mut self, kind: DrawKind) -> f64 {
        match kind {
            DrawKind::Uniform01 => self.uniform01(),
            DrawKind::StandardNormal => self.standard_normal(),
        }
    }

    /// Fill `out` with i.i.d. standard normals (ziggurat; bulk draws such
    /// as front-end noise dominate run time).
    pub fn fill_standard_normal(&mut self, out: &mut [f64]) {
        for v in out {
            *v = StandardNormal.sample(&mut self.rng);
        }
    }

    /// Fisher–Yates shuffle of `items`.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }

    fn box_muller_polar(&mut self) -> (f64, f64) {
        // u1 in (0, 1] keeps the log finite.
        let u1 = ((self.next_u64() >> 11) as f64 + 1.0) / TWO_POW_53;
        let u2 = self.uniform01();
        ((-2.0 * u1.ln()).sqrt(), std::f64::consts::TAU * u2)
    }
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}

/// Combine a base seed with a sequence of keys into a new 64-bit seed.
pub fn derive_seed(base: u64, keys: &[u64]) -> u64 {
    keys.iter()
        .fold(splitmix64(base), |acc, &k| splitmix64(acc ^ splitmix64(k)))
}

//! Counter-based random streams.
//!
//! Every random draw in the crate comes from Philox4x32-10 (Salmon et al.,
//! SC'11), keyed by a 64-bit seed and addressed by a 128-bit counter. The
//! upper 64 counter bits select a substream and the lower 64 bits count
//! blocks inside it, so any (seed, substream, position) triple maps to the
//! same bits on every platform and independent of evaluation order.
//!
//! Constants are the published Philox4x32 ones:
//!
//! | name | value        |
//! |------|--------------|
//! | M0   | `0xD2511F53` |
//! | M1   | `0xCD9E8D57` |
//! | W0   | `0x9E3779B9` |
//! | W1   | `0xBB67AE85` |

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;
const ROUNDS: usize = 10;

/// Substream tag used to derive per-trial seeds from a master seed.
const DERIVE_TAG: u64 = 0x5EED_0000_0000_0000;

#[inline]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = u64::from(a) * u64::from(b);
    ((p >> 32) as u32, p as u32)
}

/// One Philox4x32-10 block: 128 bits of output for a 128-bit counter.
pub fn philox4x32(counter: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let mut ctr = counter;
    let mut key = key;
    for round in 0..ROUNDS {
        if round > 0 {
            key[0] = key[0].wrapping_add(PHILOX_W0);
            key[1] = key[1].wrapping_add(PHILOX_W1);
        }
        let (hi0, lo0) = mulhilo(PHILOX_M0, ctr[0]);
        let (hi1, lo1) = mulhilo(PHILOX_M1, ctr[2]);
        ctr = [hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0];
    }
    ctr
}

fn split(x: u64) -> (u32, u32) {
    (x as u32, (x >> 32) as u32)
}

/// Addresses of independent substreams under one seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Substream(pub u64);

impl Substream {
    /// Plain sequential draws (`distributions::sample`).
    pub const SEQUENCE: Substream = Substream(0);
    /// Draws used by audits (kappa-control Monte Carlo, Levy norms).
    pub const AUDIT: Substream = Substream(1);

    /// Noise entry (i, j) of a random matrix. Indices must fit in 31 bits.
    pub fn entry(i: usize, j: usize) -> Substream {
        debug_assert!(i < (1 << 31) && j < (1 << 31));
        Substream((1u64 << 63) | ((i as u64) << 31) | j as u64)
    }

    /// Coordinate `j` of a random vector in trial-local experiments.
    pub fn coordinate(j: usize) -> Substream {
        Substream((1u64 << 62) | j as u64)
    }
}

/// Sequential reader over one Philox substream.
#[derive(Clone, Debug)]
pub struct Stream {
    key: [u32; 2],
    substream: u64,
    block: u64,
    buf: [u32; 4],
    used: usize,
}

impl Stream {
    pub fn new(seed: u64, substream: Substream) -> Self {
        let (k0, k1) = split(seed);
        Stream {
            key: [k0, k1],
            substream: substream.0,
            block: 0,
            buf: [0; 4],
            used: 4,
        }
    }

    fn refill(&mut self) {
        let (b0, b1) = split(self.block);
        let (s0, s1) = split(self.substream);
        self.buf = philox4x32([b0, b1, s0, s1], self.key);
        self.block = self.block.wrapping_add(1);
        self.used = 0;
    }

    #[inline]
    pub fn next_u32(&mut self) -> u32 {
        if self.used == 4 {
            self.refill();
        }
        let x = self.buf[self.used];
        self.used += 1;
        x
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let lo = u64::from(self.next_u32());
        let hi = u64::from(self.next_u32());
        (hi << 32) | lo
    }

    /// Uniform on (0, 1], 53 bits of resolution. Never returns 0.
    #[inline]
    pub fn uniform_open0(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on [0, 1).
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal via Box-Muller (one output per two uniforms).
    #[inline]
    pub fn standard_normal(&mut self) -> f64 {
        let u1 = self.uniform_open0();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

/// Seed for trial `index` of an experiment run under `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let (i0, i1) = split(index);
    let (t0, t1) = split(DERIVE_TAG);
    let (m0, m1) = split(master);
    let out = philox4x32([i0, i1, t0, t1], [m0, m1]);
    (u64::from(out[1]) << 32) | u64::from(out[0])
}

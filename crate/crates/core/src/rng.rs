//! Seeded random streams.
//!
//! All randomness in the pipeline comes from [`Mt64`], a 64-bit Mersenne
//! Twister (MT19937-64). A single master seed fans out into independent
//! substreams through [`derive_seed`], so that e.g. changing the epoch count
//! never perturbs weight initialization.

use statrs::function::erf::erfc_inv;

const NN: usize = 312;
const MM: usize = 156;
const MATRIX_A: u64 = 0xB502_6F5A_A966_19E9;
const UPPER_MASK: u64 = 0xFFFF_FFFF_8000_0000;
const LOWER_MASK: u64 = 0x7FFF_FFFF;

/// MT19937-64.
#[derive(Clone)]
pub struct Mt64 {
    state: [u64; NN],
    index: usize,
}

impl Mt64 {
    pub fn new(seed: u64) -> Self {
        let mut state = [0u64; NN];
        state[0] = seed;
        for i in 1..NN {
            let prev = state[i - 1];
            state[i] = 6_364_136_223_846_793_005u64
                .wrapping_mul(prev ^ (prev >> 62))
                .wrapping_add(i as u64);
        }
        Self { state, index: NN }
    }

    fn refill(&mut self) {
        let mag = |x: u64| if x & 1 == 0 { 0 } else { MATRIX_A };
        for i in 0..NN {
            let x = (self.state[i] & UPPER_MASK) | (self.state[(i + 1) % NN] & LOWER_MASK);
            self.state[i] = self.state[(i + MM) % NN] ^ (x >> 1) ^ mag(x);
        }
        self.index = 0;
    }

    pub fn next_u64(&mut self) -> u64 {
        if self.index >= NN {
            self.refill();
        }
        let mut x = self.state[self.index];
        self.index += 1;
        x ^= (x >> 29) & 0x5555_5555_5555_5555;
        x ^= (x << 17) & 0x71D6_7FFF_EDA6_0000;
        x ^= (x << 37) & 0xFFF7_EEE0_0000_0000;
        x ^= x >> 43;
        x
    }

    /// Uniform on the open interval (0, 1).
    pub fn open01(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Uniform index in `0..n` (rejection sampling, no modulo bias).
    pub fn index(&mut self, n: usize) -> usize {
        assert!(n > 0, "index range must be non-empty");
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return (v % n) as usize;
            }
        }
    }

    /// Gaussian draw by inverse-CDF transform of an open-interval uniform.
    pub fn gaussian(&mut self, mean: f64, std: f64) -> f64 {
        mean + std * std_normal_quantile(self.open01())
    }
}

/// Quantile function of N(0, 1).
pub fn std_normal_quantile(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

/// Named substreams of the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Init,
    EpochSample,
    Synthetic,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Init => 0x494E_4954,
            Stream::EpochSample => 0x4550_4F43,
            Stream::Synthetic => 0x5359_4E54,
        }
    }
}

/// splitmix64 finalizer over (master, stream).
pub fn derive_seed(master: u64, stream: Stream) -> u64 {
    let mut z = master ^ stream.tag().wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

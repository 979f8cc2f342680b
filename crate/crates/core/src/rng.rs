//! Seedable random streams.
//!
//! Every consumer of randomness gets its own ChaCha8 stream, keyed by the
//! trajectory seed and a [`StreamKey`]. Arrival and service draws for
//! different queues therefore never share state, and a trajectory replays
//! bit-for-bit no matter how many trajectories run alongside it.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::float;

/// What a stream is used for. Combined with a queue (or actor) index into the
/// ChaCha stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamKey {
    Arrival(usize),
    Service(usize),
    Policy,
    Init,
    Actor(usize),
}

impl StreamKey {
    fn id(self) -> u64 {
        let (tag, idx) = match self {
            StreamKey::Arrival(i) => (1u64, i as u64),
            StreamKey::Service(i) => (2, i as u64),
            StreamKey::Policy => (3, 0),
            StreamKey::Init => (4, 0),
            StreamKey::Actor(i) => (5, i as u64),
        };
        (tag << 48) | (idx & 0xffff_ffff_ffff)
    }
}

#[derive(Debug, Clone)]
pub struct SimRng {
    inner: ChaCha8Rng,
}

impl SimRng {
    pub fn new(seed: u64) -> Self {
        SimRng {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Independent stream for `key` under trajectory seed `seed`.
    pub fn substream(seed: u64, key: StreamKey) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(key.id());
        SimRng { inner }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on the open interval (0, 1).
    pub fn uniform(&mut self) -> f64 {
        ((self.inner.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Unit-mean exponential.
    pub fn exp1(&mut self) -> f64 {
        -float::ln(self.uniform())
    }

    /// Standard normal via Box-Muller (one of the pair is discarded).
    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        float::sqrt(-2.0 * float::ln(u1)) * float::cos(core::f64::consts::TAU * u2)
    }

    /// Index drawn from unnormalised nonnegative `weights`. Falls back to the
    /// last positive entry if rounding leaves the draw past the total.
    pub fn categorical(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        let mut target = self.uniform() * total;
        let mut last = 0;
        for (k, &w) in weights.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            last = k;
            if target < w {
                return k;
            }
            target -= w;
        }
        last
    }
}

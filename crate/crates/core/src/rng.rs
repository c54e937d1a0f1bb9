//! Counter-based deterministic random number generation.
//!
//! Every draw is a pure function of `(seed, counter, draw_index)`, so the same
//! observation can be regenerated from any worker without sharing generator
//! state. The construction chains two SplitMix64 streams: a master stream
//! keyed by `seed` whose `counter`-th output becomes the key of a per-sample
//! stream, whose `draw_index`-th output is the actual 64-bit draw. SplitMix64
//! is a fixed, documented algorithm (Steele, Lea & Flood 2014), so results are
//! bit-identical across platforms and degrees of parallelism.
//!
//! Gaussian variates use the Box-Muller transform with a fixed convention:
//! `u1` is drawn on (0,1], `u2` on [0,1), and a call returns
//! `sqrt(-2 ln u1) * cos(2*pi*u2)` first, caching the `sin` branch as a spare.

/// Weyl-sequence increment of SplitMix64 (the 64-bit golden ratio).
const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function: a bijective avalanche mix of the state.
#[inline]
fn mix(mut z: u64) -> u64 {
    z ^= z >> 30;
    z = z.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    z
}

/// The `index`-th output of the SplitMix64 sequence seeded with `state`.
#[inline]
fn stream_at(state: u64, index: u64) -> u64 {
    mix(state.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN)))
}

/// Derives an independent child seed, e.g. one per trial or per shard.
///
/// The seed is pre-mixed before indexing so child streams do not collide with
/// the per-sample keys that [`SeededStream`] hands out for the same seed.
#[inline]
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    stream_at(mix(seed ^ GOLDEN), index)
}

/// A position in a deterministic stream of samples.
///
/// `(seed, counter)` fully determines the next sample; the counter advances by
/// one per sample taken. Values are cheap to copy and never shared mutably.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeededStream {
    seed: u64,
    counter: u64,
}

impl SeededStream {
    pub fn new(seed: u64) -> Self {
        Self { seed, counter: 0 }
    }

    /// A stream positioned at an arbitrary counter.
    pub fn at(seed: u64, counter: u64) -> Self {
        Self { seed, counter }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// The draw stream for the sample at the current counter; advances the
    /// counter past it.
    pub fn next_draws(&mut self) -> DrawStream {
        let draws = self.draws_at(self.counter);
        self.counter += 1;
        draws
    }

    /// The draw stream for the sample at `counter`, without moving this stream.
    pub fn draws_at(&self, counter: u64) -> DrawStream {
        DrawStream::new(stream_at(self.seed, counter))
    }
}

/// The sequence of draws backing one sample.
#[derive(Debug, Clone)]
pub struct DrawStream {
    key: u64,
    index: u64,
    spare_normal: Option<f64>,
}

impl DrawStream {
    fn new(key: u64) -> Self {
        Self {
            key,
            index: 0,
            spare_normal: None,
        }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let x = stream_at(self.key, self.index);
        self.index += 1;
        x
    }

    /// Uniform on [0, 1), using the top 53 bits of a draw.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on (0, 1]; safe as a log argument.
    #[inline]
    fn uniform_open(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal variate (Box-Muller, cos branch first).
    #[inline]
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = self.uniform_open();
        let u2 = self.uniform();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = std::f64::consts::TAU * u2;
        self.spare_normal = Some(radius * angle.sin());
        radius * angle.cos()
    }

    pub fn fill_normals(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.normal();
        }
    }
}

//! Reproducible broadcast schedules.
//!
//! The draw for node `i` in round `t` is a pure function of
//! `(seed, label, t, i)`: the tuple is hashed through a fixed 64-bit mixer
//! and mapped to `[0, 1)`. Any round can be regenerated without replaying
//! earlier rounds, and streams with different labels never share draws.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::centrality::ProbabilityVector;

pub const SCHEDULE_LABEL: &str = "schedule";
pub const INIT_VALUES_LABEL: &str = "init-values";
pub const SPSA_LABEL: &str = "spsa";

/// splitmix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3))
}

/// A named, seeded source of counter-addressed uniforms.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScheduleStream {
    seed: u64,
    label: String,
    key: u64,
}

impl ScheduleStream {
    pub fn new(seed: u64, label: impl Into<String>) -> Self {
        let label = label.into();
        let key = mix64(mix64(seed ^ 0x9E37_79B9_7F4A_7C15) ^ fnv1a64(label.as_bytes()));
        Self { seed, label, key }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Raw 64-bit draw at `(t, i)`.
    pub fn bits(&self, t: u64, i: u64) -> u64 {
        let h = mix64(self.key ^ t.wrapping_mul(0xD134_2543_DE82_EF95));
        mix64(h ^ i.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x632B_E59B_D9B4_E019))
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn uniform(&self, t: u64, i: u64) -> f64 {
        (self.bits(t, i) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// A sequential generator for substream `index`, for consumers that need
    /// many draws of a standard distribution (e.g. normal initial values).
    pub fn rng(&self, index: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.bits(u64::MAX, index))
    }
}

/// Which nodes broadcast in one round.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScheduleVector {
    pub round: u64,
    pub active: Vec<bool>,
}

impl ScheduleVector {
    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    /// Number of transmission slots the round consumes (one per broadcaster).
    pub fn slots(&self) -> u64 {
        self.active.iter().filter(|&&b| b).count() as u64
    }
}

impl fmt::Display for ScheduleVector {
    /// Audit form `t: bitstring`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: ", self.round)?;
        for &b in &self.active {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Independent Bernoulli(p_i) broadcast decisions for round `t`.
pub fn schedule(stream: &ScheduleStream, p: &ProbabilityVector, t: u64) -> ScheduleVector {
    let active = p.as_slice().iter().enumerate().map(|(i, &pi)| stream.uniform(t, i as u64) < pi).collect();
    ScheduleVector { round: t, active }
}

pub fn slots(v: &ScheduleVector) -> u64 {
    v.slots()
}

//! Seeded random substreams.
//!
//! Every consumer of randomness in a run (mobility, fading, traffic, GNSS
//! error, timer offsets) draws from its own ChaCha stream derived from the
//! run seed and a stream name, so enabling or disabling one model never
//! shifts the draws seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::geom::Vec3;

pub type SimRng = ChaCha8Rng;

/// Named randomness consumers within one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Mobility,
    Fading,
    Traffic,
    Gnss,
    Schedule,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Mobility => 0x6d6f_6269,
            Stream::Fading => 0x6661_6465,
            Stream::Traffic => 0x7472_6166,
            Stream::Gnss => 0x676e_7373,
            Stream::Schedule => 0x7363_6864,
        }
    }
}

/// SplitMix64 finalizer, used to spread seed material.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn substream(seed: u64, stream: Stream) -> SimRng {
    SimRng::seed_from_u64(mix64(seed ^ mix64(stream.tag())))
}

/// Stream keyed by arbitrary extra words (e.g. agent id and epoch).
pub fn keyed(seed: u64, stream: Stream, keys: &[u64]) -> SimRng {
    let mut h = mix64(seed ^ mix64(stream.tag()));
    for &k in keys {
        h = mix64(h ^ k);
    }
    SimRng::seed_from_u64(h)
}

/// Uniform direction on the unit sphere.
pub fn unit_sphere<R: rand::Rng + ?Sized>(rng: &mut R) -> Vec3 {
    let z: f64 = rng.random_range(-1.0..=1.0);
    let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let r = (1.0 - z * z).max(0.0).sqrt();
    Vec3::new(r * phi.cos(), r * phi.sin(), z)
}

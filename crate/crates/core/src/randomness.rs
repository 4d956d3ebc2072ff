//! Seeded noise streams.
//!
//! Every random draw in the crate comes from a [`RngStream`], a ChaCha20
//! keystream (`rand_chacha::ChaCha20Rng`, whose output is specified bit-for-bit
//! and independent of platform endianness). A stream is identified by a master
//! seed plus a `(node, purpose)` pair; its 256-bit key is
//!
//! ```text
//! SHA-256( "dplr/stream/v1" || seed as u64 LE || node as u64 LE || purpose UTF-8 )
//! ```
//!
//! Uniforms are built from the top 53 bits of `next_u64` as `(k + 0.5) / 2^53`,
//! which lies strictly inside `(0, 1)`. Laplace draws use the inverse CDF and
//! normals use Box–Muller; both evaluate logarithms and trigonometric functions
//! through `libm` so results do not depend on the host C library.

use nalgebra::DVector;
use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const STREAM_DOMAIN: &[u8] = b"dplr/stream/v1";
const SEED_DOMAIN: &[u8] = b"dplr/seed/v1";

/// Identity of a stream: the owning node (0 is used for global streams) and a
/// purpose tag such as `"noise"` or `"design"`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StreamId {
    pub node: usize,
    pub purpose: String,
}

pub struct RngStream {
    seed: u64,
    id: StreamId,
    rng: ChaCha20Rng,
    spare_normal: Option<f64>,
}

impl RngStream {
    pub fn new(seed: u64, node: usize, purpose: &str) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(STREAM_DOMAIN);
        hasher.update(seed.to_le_bytes());
        hasher.update((node as u64).to_le_bytes());
        hasher.update(purpose.as_bytes());
        let key: [u8; 32] = hasher.finalize().into();
        Self {
            seed,
            id: StreamId {
                node,
                purpose: purpose.to_string(),
            },
            rng: ChaCha20Rng::from_seed(key),
            spare_normal: None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn id(&self) -> &StreamId {
        &self.id
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform on the open interval (0, 1).
    pub fn uniform(&mut self) -> f64 {
        let k = self.next_u64() >> 11;
        (k as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n` by rejection (no modulo bias).
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let x = self.next_u64();
            if x < zone {
                return x % n;
            }
        }
    }

    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = self.uniform();
        let u2 = self.uniform();
        let r = libm::sqrt(-2.0 * libm::log(u1));
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(r * libm::sin(theta));
        r * libm::cos(theta)
    }

    /// One Laplace(0, scale) draw by inverse CDF.
    pub fn laplace(&mut self, scale: f64) -> f64 {
        let w = self.uniform() - 0.5;
        let magnitude = -scale * libm::log1p(-2.0 * w.abs());
        if w < 0.0 {
            -magnitude
        } else {
            magnitude
        }
    }
}

/// Derives the `index`-th child seed of `master` for a named family
/// (per-trial seeds, for instance). The mapping is prefix-stable: the first
/// `r` children do not depend on how many are requested.
pub fn derive_seed(master: u64, family: &str, index: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(SEED_DOMAIN);
    hasher.update(master.to_le_bytes());
    hasher.update(family.as_bytes());
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

pub fn trial_seeds(master: u64, trials: usize) -> Vec<u64> {
    (0..trials as u64)
        .map(|r| derive_seed(master, "trial", r))
        .collect()
}

/// `dim` i.i.d. Laplace(0, scale) coordinates.
pub fn sample_laplace_vector(dim: usize, scale: f64, stream: &mut RngStream) -> Result<DVector<f64>> {
    if !(scale > 0.0) {
        return Err(Error::NonPositiveScale(scale));
    }
    Ok(DVector::from_iterator(
        dim,
        (0..dim).map(|_| stream.laplace(scale)),
    ))
}

/// Log of the product Laplace density with common scale, evaluated at `x`.
pub fn laplace_log_density(x: &[f64], scale: f64) -> Result<f64> {
    if !(scale > 0.0) {
        return Err(Error::NonPositiveScale(scale));
    }
    let norm = libm::log(2.0 * scale);
    Ok(x.iter().map(|xi| -norm - xi.abs() / scale).sum())
}

pub fn laplace_cdf(x: f64, scale: f64) -> f64 {
    if x < 0.0 {
        0.5 * libm::exp(x / scale)
    } else {
        1.0 - 0.5 * libm::exp(-x / scale)
    }
}

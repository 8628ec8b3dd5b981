//! Counter-based randomness.
//!
//! Every random number in a simulation is a pure function of a [`RandomTag`].
//! A tag is hashed into a 64-bit word by absorbing its fields one at a time
//! through the SplitMix64 finalizer:
//!
//! ```text
//! h  <- mix(seed ^ 0x9E3779B97F4A7C15)
//! for w in [label code, walk_id, time, site[0], ..., site[d-1]]:
//!     h <- mix((h + 0x9E3779B97F4A7C15) ^ w)
//! u  <- (mix(h) >> 11) * 2^-53           // uniform on [0, 1)
//! ```
//!
//! Signed site coordinates enter as their two's-complement `u64` bit pattern.
//! Label codes are fixed: alpha=1, init=2, pi=3, ktilde=4, eps=5, step=6.
//! Replica seeds use the same absorber over
//! `[fnv1a64(purpose), index_0, index_1, ...]` (see [`derive_seed`]).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
fn absorb(h: u64, w: u64) -> u64 {
    mix64(h.wrapping_add(GOLDEN) ^ w)
}

#[inline]
fn to_unit(h: u64) -> f64 {
    (mix64(h) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Named random streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum StreamLabel {
    /// Refresh coins alpha_t(x).
    Alpha = 1,
    /// Time-0 stationary draw of a site chain.
    Init = 2,
    /// Stationary draw after a refresh.
    Pi = 3,
    /// Residual-kernel step of a site chain.
    Ktilde = 4,
    /// Walker's epsilon coin.
    Eps = 5,
    /// Walker's move sampling.
    Step = 6,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RandomTag<'a> {
    pub seed: u64,
    pub site: &'a [i64],
    pub time: u64,
    pub label: StreamLabel,
    /// Only meaningful for `Eps` and `Step`; environment streams use 0.
    pub walk_id: u64,
}

impl<'a> RandomTag<'a> {
    pub fn env(seed: u64, label: StreamLabel, site: &'a [i64], time: u64) -> Self {
        RandomTag {
            seed,
            site,
            time,
            label,
            walk_id: 0,
        }
    }

    pub fn walker(seed: u64, label: StreamLabel, walk_id: u64, time: u64) -> RandomTag<'static> {
        RandomTag {
            seed,
            site: &[],
            time,
            label,
            walk_id,
        }
    }

    pub fn hash(&self) -> u64 {
        let mut h = mix64(self.seed ^ GOLDEN);
        h = absorb(h, self.label as u64);
        h = absorb(h, self.walk_id);
        h = absorb(h, self.time);
        for &c in self.site {
            h = absorb(h, c as u64);
        }
        h
    }

    /// Uniform on `[0, 1)`.
    #[inline]
    pub fn uniform(&self) -> f64 {
        to_unit(self.hash())
    }
}

/// FNV-1a, used only to turn purpose strings into words.
pub fn fnv1a64(s: &str) -> u64 {
    s.bytes().fold(0xCBF2_9CE4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Per-purpose, per-index child seed of a master seed.
pub fn derive_seed(master: u64, purpose: &str, indices: &[u64]) -> u64 {
    let mut h = mix64(master ^ GOLDEN);
    h = absorb(h, fnv1a64(purpose));
    for &i in indices {
        h = absorb(h, i);
    }
    mix64(h)
}

/// A sequential generator for the annealed walker's private decisions.
pub fn sequential_rng(master: u64, purpose: &str, indices: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, purpose, indices))
}

/// Inverse-CDF draw from a probability vector. The last index absorbs rounding.
#[inline]
pub fn categorical(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // u lands beyond the rounded cumulative sum: take the last atom with mass
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tag_is_pure() {
        let site = [3, -2];
        let a = RandomTag::env(7, StreamLabel::Alpha, &site, 11);
        assert_eq!(a.uniform(), a.uniform());
        let b = RandomTag::env(7, StreamLabel::Alpha, &[3, -2], 11);
        assert_eq!(a.uniform(), b.uniform());
    }

    #[test]
    fn every_field_matters() {
        let base = RandomTag {
            seed: 1,
            site: &[0, 0],
            time: 5,
            label: StreamLabel::Eps,
            walk_id: 2,
        };
        let u = base.uniform();
        let variants = [
            RandomTag { seed: 2, ..base },
            RandomTag { site: &[0, 1], ..base },
            RandomTag { site: &[1, 0], ..base },
            RandomTag { time: 6, ..base },
            RandomTag { label: StreamLabel::Step, ..base },
            RandomTag { walk_id: 3, ..base },
        ];
        for v in variants {
            assert_ne!(v.uniform(), u);
        }
    }

    #[test]
    fn uniform_moments_and_lag_correlation() {
        let n = 200_000u64;
        let us: Vec<f64> = (0..n)
            .map(|t| RandomTag::walker(42, StreamLabel::Eps, 0, t).uniform())
            .collect();
        let mean = us.iter().sum::<f64>() / n as f64;
        let var = us.iter().map(|u| (u - mean).powi(2)).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 4.0 * (1.0 / 12.0 / n as f64).sqrt());
        assert!((var - 1.0 / 12.0).abs() < 1e-3);
        let lag1 = us
            .windows(2)
            .map(|w| (w[0] - mean) * (w[1] - mean))
            .sum::<f64>()
            / (n as f64 * var);
        assert!(lag1.abs() < 4.0 / (n as f64).sqrt());
        assert!(us.iter().all(|&u| (0.0..1.0).contains(&u)));
    }

    #[test]
    fn neighbouring_sites_are_decorrelated() {
        let n = 100_000i64;
        let pairs: Vec<(f64, f64)> = (0..n)
            .map(|x| {
                (
                    RandomTag::env(9, StreamLabel::Alpha, &[x], 1).uniform(),
                    RandomTag::env(9, StreamLabel::Alpha, &[x + 1], 1).uniform(),
                )
            })
            .collect();
        let c = pairs.iter().map(|(a, b)| (a - 0.5) * (b - 0.5)).sum::<f64>() / n as f64 * 12.0;
        assert!(c.abs() < 4.0 / (n as f64).sqrt());
    }

    #[test]
    fn derived_seeds_differ_by_purpose_and_index() {
        let a = derive_seed(1, "env", &[0]);
        assert_ne!(a, derive_seed(1, "env", &[1]));
        assert_ne!(a, derive_seed(1, "walk", &[0]));
        assert_ne!(a, derive_seed(2, "env", &[0]));
        assert_eq!(a, derive_seed(1, "env", &[0]));
    }

    #[test]
    fn categorical_inverse_cdf() {
        let p = [0.5, 0.25, 0.25];
        assert_eq!(categorical(&p, 0.0), 0);
        assert_eq!(categorical(&p, 0.4999), 0);
        assert_eq!(categorical(&p, 0.5), 1);
        assert_eq!(categorical(&p, 0.76), 2);
        assert_eq!(categorical(&[0.3, 0.7, 0.0], 0.9999999999999999), 1);
    }
}

//! Photon-number distributions of the cavity field and the damping law of
//! its mean.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::exp;
use crate::{Error, Result};

/// Normalization slack accepted when validating a distribution.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// Smallest retained Poisson mass accepted by [`PhotonDistribution::coherent`].
pub const MIN_RETAINED_MASS: f64 = 0.999;

/// Probability vector `P(n)` over photon numbers `0..=n_max`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "Vec<f64>", into = "Vec<f64>"))]
pub struct PhotonDistribution {
    probs: Vec<f64>,
}

impl PhotonDistribution {
    /// Validates an explicit probability vector.
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDistribution("empty support"));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidDistribution("negative or non-finite entry"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::InvalidDistribution("entries do not sum to 1"));
        }
        Ok(Self { probs })
    }

    /// Normalizes non-negative weights. Fails if every weight is zero.
    pub fn from_weights(mut weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidDistribution("empty support"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidDistribution("negative or non-finite weight"));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::ImpossibleRecord);
        }
        for w in &mut weights {
            *w /= total;
        }
        Ok(Self { probs: weights })
    }

    /// Uniform distribution, `1/(n_max+1)` everywhere.
    pub fn flat(n_max: usize) -> Self {
        let p = 1.0 / (n_max as f64 + 1.0);
        Self {
            probs: vec![p; n_max + 1],
        }
    }

    /// Fock state `|n⟩` on the support `0..=n_max`.
    pub fn fock(n: usize, n_max: usize) -> Result<Self> {
        if n > n_max {
            return Err(Error::OutOfRange { n, n_max });
        }
        let mut probs = vec![0.0; n_max + 1];
        probs[n] = 1.0;
        Ok(Self { probs })
    }

    /// Poisson law of mean `n0` truncated to `0..=n_max` and renormalized.
    ///
    /// Fails when the truncation would discard more than
    /// `1 - MIN_RETAINED_MASS` of the probability.
    pub fn coherent(n0: f64, n_max: usize) -> Result<Self> {
        if !(n0 >= 0.0) || !n0.is_finite() {
            return Err(Error::NegativeMean(n0));
        }
        let mut probs = Vec::with_capacity(n_max + 1);
        let mut p = exp(-n0);
        probs.push(p);
        for n in 1..=n_max {
            p *= n0 / n as f64;
            probs.push(p);
        }
        let kept: f64 = probs.iter().sum();
        if kept < MIN_RETAINED_MASS {
            return Err(Error::Truncation { n_max, kept });
        }
        for p in &mut probs {
            *p /= kept;
        }
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_probs(self) -> Vec<f64> {
        self.probs
    }

    pub fn n_max(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `P(n)`, zero outside the support.
    pub fn get(&self, n: usize) -> f64 {
        self.probs.get(n).copied().unwrap_or(0.0)
    }

    /// Mean photon number `Σ n P(n)`.
    pub fn mean(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(n, p)| n as f64 * p)
            .sum()
    }

    /// Most probable photon number; the smallest `n` wins ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (n, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = n;
            }
        }
        best
    }

    pub fn max_prob(&self) -> f64 {
        self.probs[self.argmax()]
    }

    /// Probability mass on photon numbers `>= n`.
    pub fn tail_mass(&self, n: usize) -> f64 {
        self.probs.iter().skip(n).sum()
    }
}

impl TryFrom<Vec<f64>> for PhotonDistribution {
    type Error = Error;

    fn try_from(probs: Vec<f64>) -> Result<Self> {
        Self::from_probs(probs)
    }
}

impl From<PhotonDistribution> for Vec<f64> {
    fn from(d: PhotonDistribution) -> Self {
        d.probs
    }
}

/// Mean photon number of a distribution.
pub fn mean_photon(dist: &PhotonDistribution) -> f64 {
    dist.mean()
}

/// Cavity damping time `T_c` (s) and mean thermal photon number `n_t`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CavityParams {
    pub damping_time: f64,
    pub thermal_photons: f64,
}

impl CavityParams {
    pub fn new(damping_time: f64, thermal_photons: f64) -> Result<Self> {
        let params = Self {
            damping_time,
            thermal_photons,
        };
        params.validate()?;
        Ok(params)
    }

    /// `T_c = 0.130 s`, `n_t = 0.05`.
    pub const fn experiment() -> Self {
        Self {
            damping_time: 0.130,
            thermal_photons: 0.05,
        }
    }

    pub fn validate(&self) -> Result<()> {
        // `T_c = +inf` is allowed: a frozen field.
        if !(self.damping_time > 0.0) {
            return Err(Error::InvalidCavity("damping time must be positive"));
        }
        if !(self.thermal_photons >= 0.0) || !self.thermal_photons.is_finite() {
            return Err(Error::InvalidCavity("thermal photon number must be non-negative"));
        }
        Ok(())
    }
}

impl Default for CavityParams {
    fn default() -> Self {
        Self::experiment()
    }
}

/// Mean photon number of a coherent field after free decay for `t` seconds:
/// `n0 · exp(−t/T_c)`. The thermal floor `n_t` is ignored.
pub fn decayed_mean(n0: f64, t: f64, cavity: &CavityParams) -> f64 {
    n0 * exp(-t / cavity.damping_time)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Direct evaluation e^{-λ} λ^n / n!, kept independent of the recurrence.
    fn poisson_oracle(lambda: f64, n: usize) -> f64 {
        let mut fact = 1.0;
        for k in 1..=n {
            fact *= k as f64;
        }
        libm::exp(-lambda) * libm::pow(lambda, n as f64) / fact
    }

    #[test]
    fn vacuum_coherent_state() {
        let d = PhotonDistribution::coherent(0.0, 7).unwrap();
        assert_eq!(d.get(0), 1.0);
        assert_eq!(d.mean(), 0.0);
    }

    #[test]
    fn coherent_matches_poisson() {
        let d = PhotonDistribution::coherent(3.82, 15).unwrap();
        let kept: f64 = (0..=15).map(|n| poisson_oracle(3.82, n)).sum();
        for n in 0..=15 {
            assert!((d.get(n) - poisson_oracle(3.82, n) / kept).abs() < 1e-14);
        }
        assert!((d.get(0) - 0.021928).abs() < 1e-5);
        assert!((d.get(4) - 0.194553).abs() < 1e-5);
        // Oracle tail Σ_{n>=8}; differs from the rounded 3.5% quoted for the experiment.
        assert!((d.tail_mass(8) - 0.041132).abs() < 1e-5);
    }

    #[test]
    fn coherent_mean_converges() {
        let d = PhotonDistribution::coherent(3.82, 25).unwrap();
        assert!((d.mean() - 3.82).abs() < 1e-4);
    }

    #[test]
    fn coherent_rejects_bad_input() {
        assert_eq!(
            PhotonDistribution::coherent(-0.1, 10),
            Err(Error::NegativeMean(-0.1))
        );
        assert!(matches!(
            PhotonDistribution::coherent(3.82, 5),
            Err(Error::Truncation { n_max: 5, .. })
        ));
    }

    #[test]
    fn flat_distributions() {
        assert!(PhotonDistribution::flat(7).probs().iter().all(|&p| p == 0.125));
        assert_eq!(PhotonDistribution::flat(0).probs(), &[1.0]);
        assert!(PhotonDistribution::flat(3).probs().iter().all(|&p| p == 0.25));
        assert_eq!(mean_photon(&PhotonDistribution::flat(7)), 3.5);
    }

    #[test]
    fn fock_mean_and_argmax() {
        let d = PhotonDistribution::fock(5, 7).unwrap();
        assert_eq!(d.mean(), 5.0);
        assert_eq!(d.argmax(), 5);
        assert!(PhotonDistribution::fock(8, 7).is_err());
    }

    #[test]
    fn argmax_prefers_smallest_on_ties() {
        let d = PhotonDistribution::from_probs(alloc::vec![0.1, 0.4, 0.1, 0.4]).unwrap();
        assert_eq!(d.argmax(), 1);
    }

    #[test]
    fn validation() {
        assert!(PhotonDistribution::from_probs(alloc::vec![0.5, 0.6]).is_err());
        assert!(PhotonDistribution::from_probs(alloc::vec![-0.1, 1.1]).is_err());
        assert!(PhotonDistribution::from_probs(alloc::vec![]).is_err());
        assert_eq!(
            PhotonDistribution::from_weights(alloc::vec![0.0, 0.0]),
            Err(Error::ImpossibleRecord)
        );
        assert!(CavityParams::new(0.0, 0.05).is_err());
        assert!(CavityParams::new(0.13, -1.0).is_err());
        assert!(CavityParams::new(f64::INFINITY, 0.0).is_ok());
    }

    #[test]
    fn decay_law() {
        let cav = CavityParams::experiment();
        assert_eq!(decayed_mean(3.82, 0.0, &cav), 3.82);
        assert!((decayed_mean(3.82, 0.013, &cav) - 3.456479).abs() < 1e-6);
        let cold = CavityParams::new(0.13, 0.0).unwrap();
        assert_eq!(decayed_mean(3.82, f64::INFINITY, &cold), 0.0);
    }

    proptest! {
        #[test]
        fn coherent_normalized(n0 in 0.0f64..8.0, n_max in 25usize..40) {
            let d = PhotonDistribution::coherent(n0, n_max).unwrap();
            let s: f64 = d.probs().iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-9);
            prop_assert!(d.probs().iter().all(|&p| p >= 0.0));
        }

        #[test]
        fn coherent_mean_tends_to_lambda(lambda in 0.0f64..6.0) {
            // n_max = 40 leaves a tail far below 1e-8 for λ < 6.
            let d = PhotonDistribution::coherent(lambda, 40).unwrap();
            prop_assert!((d.mean() - lambda).abs() < 1e-6);
        }

        #[test]
        fn decay_is_multiplicative(n0 in 0.0f64..10.0, t1 in 0.0f64..1.0, t2 in 0.0f64..1.0) {
            let cav = CavityParams::experiment();
            let one = decayed_mean(n0, t1 + t2, &cav);
            let two = decayed_mean(decayed_mean(n0, t1, &cav), t2, &cav);
            prop_assert!((one - two).abs() <= 1e-12 * n0.max(1.0));
        }
    }
}

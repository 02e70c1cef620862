//! Adaptive binary photon counting with ideal fringes.
//!
//! Stage `m` uses a phase shift per photon of `π/2^m` and a detection angle
//! referenced to the bits already known, `φ_m = (π/2^m)·n_known`. The spin
//! then points along `±` the detection axis and one atom reads bit `b_m`
//! with certainty. Bits come out least significant first.

use alloc::vec::Vec;

use crate::math::{cos, PI};
use crate::probe::{Outcome, ProbeParams};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdaptiveStage {
    pub index: usize,
    pub phase_per_photon: f64,
}

impl AdaptiveStage {
    /// Detection angle given the photon number assembled from earlier bits.
    pub fn detection_phase(&self, n_known: usize) -> f64 {
        self.phase_per_photon * n_known as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdaptiveSchedule {
    pub n_max: usize,
    pub stages: Vec<AdaptiveStage>,
}

/// Smallest integer `>= log2(n_max + 1)`.
pub fn stage_count(n_max: usize) -> usize {
    if n_max == 0 {
        0
    } else {
        (usize::BITS - n_max.leading_zeros()) as usize
    }
}

pub fn adaptive_phase_schedule(n_max: usize) -> AdaptiveSchedule {
    let stages = (0..stage_count(n_max))
        .map(|m| AdaptiveStage {
            index: m,
            phase_per_photon: PI / (1u64 << m) as f64,
        })
        .collect();
    AdaptiveSchedule { n_max, stages }
}

/// One stage of a measurement: angle used, `P(j = 0)` before the atom, and
/// the bit read.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StageReading {
    pub detection_phase: f64,
    pub p_zero: f64,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdaptiveResult {
    pub estimate: usize,
    pub atoms_used: usize,
    pub readings: Vec<StageReading>,
}

/// Runs the schedule against a field holding exactly `n_true` photons.
/// Requires ideal fringes (`A = B = 1`), so every reading is certain.
pub fn adaptive_measure(n_true: usize, n_max: usize, probe: &ProbeParams) -> Result<AdaptiveResult> {
    if n_true > n_max {
        return Err(Error::OutOfRange { n: n_true, n_max });
    }
    if probe.offset != 1.0 || probe.contrast != 1.0 {
        return Err(Error::NonIdealContrast);
    }
    let schedule = adaptive_phase_schedule(n_max);
    let mut n_known = 0usize;
    let mut readings = Vec::with_capacity(schedule.stages.len());
    for stage in &schedule.stages {
        let phase = stage.detection_phase(n_known);
        let p_zero = 0.5 * (1.0 + cos(n_true as f64 * stage.phase_per_photon - phase));
        let outcome = if p_zero > 0.5 { Outcome::Zero } else { Outcome::One };
        if outcome == Outcome::One {
            n_known += 1 << stage.index;
        }
        readings.push(StageReading {
            detection_phase: phase,
            p_zero,
            outcome,
        });
    }
    Ok(AdaptiveResult {
        estimate: n_known,
        atoms_used: readings.len(),
        readings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_counts() {
        assert_eq!(adaptive_phase_schedule(7).stages.len(), 3);
        assert_eq!(adaptive_phase_schedule(1).stages.len(), 1);
        assert_eq!(adaptive_phase_schedule(0).stages.len(), 0);
        assert_eq!(stage_count(8), 4);
        let s = adaptive_phase_schedule(7);
        assert_eq!(s.stages[0].phase_per_photon, PI);
        assert_eq!(s.stages[2].phase_per_photon, PI / 4.0);
        assert_eq!(s.stages[0].detection_phase(0), 0.0);
    }

    #[test]
    fn five_in_three_atoms() {
        let r = adaptive_measure(5, 7, &ProbeParams::ideal()).unwrap();
        assert_eq!((r.estimate, r.atoms_used), (5, 3));
        let bits: Vec<u8> = r.readings.iter().map(|x| x.outcome.as_u8()).collect();
        assert_eq!(bits, alloc::vec![1, 0, 1]);
        let r = adaptive_measure(0, 7, &ProbeParams::ideal()).unwrap();
        assert_eq!((r.estimate, r.atoms_used), (0, 3));
    }

    #[test]
    fn exhaustive_exact_recovery() {
        for n_max in 0..=31 {
            for n in 0..=n_max {
                let r = adaptive_measure(n, n_max, &ProbeParams::ideal()).unwrap();
                assert_eq!(r.estimate, n);
                assert_eq!(r.atoms_used, stage_count(n_max));
                for reading in &r.readings {
                    let certain = reading.p_zero.min(1.0 - reading.p_zero);
                    assert!(certain < 1e-12, "n = {n}, p0 = {}", reading.p_zero);
                }
            }
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(
            adaptive_measure(8, 7, &ProbeParams::ideal()),
            Err(Error::OutOfRange { n: 8, n_max: 7 })
        );
        assert_eq!(
            adaptive_measure(3, 7, &ProbeParams::experiment()),
            Err(Error::NonIdealContrast)
        );
    }
}

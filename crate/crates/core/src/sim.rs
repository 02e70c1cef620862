//! Ground-truth generator.
//!
//! The photon number follows a birth–death jump process (downward rate
//! `n(1+n_t)/T_c`, upward rate `(n+1)n_t/T_c`). Atoms arrive in pulses at a
//! fixed rate; each pulse prepares a Poisson number of atoms, each detected
//! with probability `efficiency`, and every detected atom reads the fringe
//! at the current photon number. Pulses cycle through the four detection
//! directions whether or not they contain a detected atom.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::decoder::DetectionRecord;
use crate::field::{CavityParams, PhotonDistribution};
use crate::math::{exp, ln};
use crate::probe::{Outcome, PhaseIndex, ProbeParams};
use crate::{Error, Result};

/// Atomic beam: pulses per second, mean atoms prepared per pulse and
/// per-atom detection efficiency.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BeamParams {
    pub pulse_rate: f64,
    pub mean_prepared: f64,
    pub efficiency: f64,
}

impl BeamParams {
    /// 1.4×10⁴ pulses/s, 0.6 atoms prepared per pulse, 50 % detection,
    /// i.e. 0.3 detected atoms per pulse.
    pub const fn experiment() -> Self {
        Self {
            pulse_rate: 1.4e4,
            mean_prepared: 0.6,
            efficiency: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pulse_rate > 0.0 && self.pulse_rate.is_finite()) {
            return Err(Error::InvalidConfig("pulse rate must be positive"));
        }
        if !(self.mean_prepared >= 0.0 && self.mean_prepared.is_finite()) {
            return Err(Error::InvalidConfig("mean atoms per pulse must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::InvalidConfig("detection efficiency must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Mean time between detected atoms.
    pub fn mean_detection_interval(&self) -> f64 {
        1.0 / (self.pulse_rate * self.mean_prepared * self.efficiency)
    }
}

impl Default for BeamParams {
    fn default() -> Self {
        Self::experiment()
    }
}

/// How outcome probabilities are normalized when sampling, given that the
/// fringe likelihoods of `j = 0` and `j = 1` sum to `A`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum OutcomeMode {
    /// `P(j=0) = [A + B cos(nΦ − φ)] / 2A`: sampling law proportional to the
    /// decoder likelihood.
    #[default]
    Matched,
    /// `P(j=0) = [A + B cos(nΦ − φ)] / 2`, `P(j=1)` its complement.
    Offset,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SimConfig {
    /// Mean of the initial coherent field.
    pub n0: f64,
    pub cavity: CavityParams,
    pub probe: ProbeParams,
    pub beam: BeamParams,
    /// Truncation of the truth process; upward jumps stop here.
    pub n_max_sim: usize,
    /// Sequence length (s).
    pub duration: f64,
    /// Stop a sequence early once this many atoms were detected.
    pub max_atoms: Option<u32>,
    pub outcome_mode: OutcomeMode,
    pub seed: u64,
}

impl SimConfig {
    pub fn experiment() -> Self {
        Self {
            n0: 3.82,
            cavity: CavityParams::experiment(),
            probe: ProbeParams::experiment(),
            beam: BeamParams::experiment(),
            n_max_sim: 15,
            duration: 0.7,
            max_atoms: None,
            outcome_mode: OutcomeMode::Matched,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0) {
            return Err(Error::InvalidConfig("duration must be positive"));
        }
        if self.n_max_sim < 8 {
            return Err(Error::InvalidConfig("n_max_sim must be at least 8"));
        }
        self.cavity.validate()?;
        self.probe.validate()?;
        self.beam.validate()?;
        if self.outcome_mode == OutcomeMode::Matched && self.probe.offset <= 0.0 {
            return Err(Error::ZeroOffset);
        }
        PhotonDistribution::coherent(self.n0, self.n_max_sim)?;
        Ok(())
    }
}

impl Default for SimConfig {
    fn default() -> Self {
        Self::experiment()
    }
}

/// Photon number after a jump; the first event of a log (at `t = 0`) is
/// the initial draw.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TruthEvent {
    pub t: f64,
    pub n_after: u32,
}

/// Photon number at time `t` according to a truth log.
pub fn truth_at(truth: &[TruthEvent], t: f64) -> Option<u32> {
    truth.iter().take_while(|e| e.t <= t).last().map(|e| e.n_after)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub seq_id: u64,
    pub records: Vec<DetectionRecord>,
    pub truth: Vec<TruthEvent>,
    /// Time at which the sequence stopped (duration or last pulse).
    pub end_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpRates {
    pub down: f64,
    pub up: f64,
}

impl JumpRates {
    pub fn total(&self) -> f64 {
        self.down + self.up
    }

    /// Expected dwell time `T_c / [n + n_t(2n+1)]`; infinite when absorbing.
    pub fn mean_dwell(&self) -> f64 {
        1.0 / self.total()
    }
}

/// Photon loss and thermal gain rates out of level `n`.
pub fn jump_rates(n: u32, cavity: &CavityParams) -> JumpRates {
    let n = f64::from(n);
    let nt = cavity.thermal_photons;
    JumpRates {
        down: n * (1.0 + nt) / cavity.damping_time,
        up: (n + 1.0) * nt / cavity.damping_time,
    }
}

/// Expected lifetime of Fock state `n`.
pub fn fock_lifetime(n: u32, cavity: &CavityParams) -> f64 {
    jump_rates(n, cavity).mean_dwell()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PulseOccupancy {
    pub prepared: u32,
    pub detected: u32,
}

fn sample_poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u32 {
    if mean <= 0.0 {
        return 0;
    }
    // Inversion; the beam and calibration means are O(1).
    let u: f64 = rng.random();
    let mut k = 0u32;
    let mut p = exp(-mean);
    let mut cdf = p;
    while u > cdf && k < 10_000 {
        k += 1;
        p *= mean / f64::from(k);
        cdf += p;
        if p == 0.0 && cdf < u {
            break;
        }
    }
    k
}

fn sample_exponential<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    -ln(1.0 - u) / rate
}

/// Draws an index from a discrete distribution by inversion.
pub fn sample_photon_number<R: Rng + ?Sized>(dist: &PhotonDistribution, rng: &mut R) -> u32 {
    let u: f64 = rng.random();
    let mut cdf = 0.0;
    for (n, p) in dist.probs().iter().enumerate() {
        cdf += p;
        if u < cdf {
            return n as u32;
        }
    }
    dist.n_max() as u32
}

/// Atoms prepared in one pulse (Poisson) and those detected (binomial thinning).
pub fn sample_pulse_occupancy<R: Rng + ?Sized>(beam: &BeamParams, rng: &mut R) -> PulseOccupancy {
    let prepared = sample_poisson(beam.mean_prepared, rng);
    let detected = (0..prepared)
        .filter(|_| rng.random::<f64>() < beam.efficiency)
        .count() as u32;
    PulseOccupancy { prepared, detected }
}

/// Probability of `j = 0` used when sampling.
pub fn outcome_zero_probability(
    probe: &ProbeParams,
    i: PhaseIndex,
    n_true: u32,
    mode: OutcomeMode,
) -> Result<f64> {
    let p = probe.likelihood(Outcome::Zero, i, n_true as usize);
    match mode {
        OutcomeMode::Matched if probe.offset <= 0.0 => Err(Error::ZeroOffset),
        OutcomeMode::Matched => Ok(p / probe.offset),
        OutcomeMode::Offset => Ok(p),
    }
}

pub fn sample_outcome<R: Rng + ?Sized>(
    probe: &ProbeParams,
    i: PhaseIndex,
    n_true: u32,
    mode: OutcomeMode,
    rng: &mut R,
) -> Result<Outcome> {
    let p0 = outcome_zero_probability(probe, i, n_true, mode)?;
    let u: f64 = rng.random();
    Ok(if u < p0 { Outcome::Zero } else { Outcome::One })
}

/// Independent random stream for sequence `seq_id` under a master seed.
pub fn sequence_rng(master_seed: u64, seq_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(seq_id);
    rng
}

struct FieldProcess<'a> {
    cavity: &'a CavityParams,
    n_cap: u32,
    n: u32,
    next_jump: f64,
}

impl<'a> FieldProcess<'a> {
    fn rates(&self) -> JumpRates {
        let mut r = jump_rates(self.n, self.cavity);
        if self.n >= self.n_cap {
            r.up = 0.0;
        }
        r
    }

    fn schedule<R: Rng + ?Sized>(&mut self, now: f64, rng: &mut R) {
        let total = self.rates().total();
        self.next_jump = if total > 0.0 && total.is_finite() {
            now + sample_exponential(total, rng)
        } else {
            f64::INFINITY
        };
    }

    /// Applies every jump up to and including `t`.
    fn advance<R: Rng + ?Sized>(&mut self, t: f64, truth: &mut Vec<TruthEvent>, rng: &mut R) {
        while self.next_jump <= t {
            let now = self.next_jump;
            let r = self.rates();
            if rng.random::<f64>() * r.total() < r.down {
                self.n -= 1;
            } else {
                self.n += 1;
            }
            truth.push(TruthEvent {
                t: now,
                n_after: self.n,
            });
            self.schedule(now, rng);
        }
    }
}

/// Simulates one sequence: initial coherent draw, field jumps, pulsed atoms.
pub fn simulate_sequence(config: &SimConfig, seq_id: u64) -> Result<Trajectory> {
    config.validate()?;
    let mut rng = sequence_rng(config.seed, seq_id);
    let initial = PhotonDistribution::coherent(config.n0, config.n_max_sim)?;

    let mut truth = Vec::new();
    let mut field = FieldProcess {
        cavity: &config.cavity,
        n_cap: config.n_max_sim as u32,
        n: sample_photon_number(&initial, &mut rng),
        next_jump: f64::INFINITY,
    };
    truth.push(TruthEvent {
        t: 0.0,
        n_after: field.n,
    });
    field.schedule(0.0, &mut rng);

    let period = 1.0 / config.beam.pulse_rate;
    let mut records = Vec::new();
    let mut phase = PhaseIndex::A;
    let mut k = 0u32;
    let mut end_time = config.duration;
    let mut pulse = 0u64;
    'pulses: loop {
        let t = pulse as f64 * period;
        if t >= config.duration {
            break;
        }
        field.advance(t, &mut truth, &mut rng);
        let occ = sample_pulse_occupancy(&config.beam, &mut rng);
        for _ in 0..occ.detected {
            let outcome = sample_outcome(&config.probe, phase, field.n, config.outcome_mode, &mut rng)?;
            k += 1;
            records.push(DetectionRecord {
                seq_id,
                k,
                t,
                phase,
                outcome,
                truth_n: Some(field.n),
            });
            if config.max_atoms.is_some_and(|m| k >= m) {
                end_time = t;
                break 'pulses;
            }
        }
        phase = phase.next();
        pulse += 1;
    }
    // Jumps after the last pulse but before the end of the sequence.
    field.advance(end_time, &mut truth, &mut rng);

    Ok(Trajectory {
        seq_id,
        records,
        truth,
        end_time,
    })
}

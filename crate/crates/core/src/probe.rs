//! The atomic-clock likelihood: probability of reading the spin in `j`
//! along a detection direction `φ` when the cavity holds `n` photons,
//! `[A + B cos(nΦ − φ + jπ)] / 2`.

use core::fmt;

use crate::math::{cos, sqrt, wrap_angle, PI};
use crate::{Error, Result};

/// One of the four detection directions `a, b, c, d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum PhaseIndex {
    A,
    B,
    C,
    D,
}

impl PhaseIndex {
    pub const ALL: [PhaseIndex; 4] = [PhaseIndex::A, PhaseIndex::B, PhaseIndex::C, PhaseIndex::D];

    pub const fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn from_letter(c: char) -> Option<Self> {
        match c {
            'a' => Some(Self::A),
            'b' => Some(Self::B),
            'c' => Some(Self::C),
            'd' => Some(Self::D),
            _ => None,
        }
    }

    pub const fn letter(self) -> char {
        match self {
            Self::A => 'a',
            Self::B => 'b',
            Self::C => 'c',
            Self::D => 'd',
        }
    }

    /// Next direction in the cycle a → b → c → d → a.
    pub const fn next(self) -> Self {
        match self {
            Self::A => Self::B,
            Self::B => Self::C,
            Self::C => Self::D,
            Self::D => Self::A,
        }
    }
}

impl fmt::Display for PhaseIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// Spin reading along the detection direction: `j = 0` or `j = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(into = "u8", try_from = "u8"))]
pub enum Outcome {
    Zero,
    One,
}

impl Outcome {
    pub const fn as_u8(self) -> u8 {
        match self {
            Self::Zero => 0,
            Self::One => 1,
        }
    }

    pub fn from_u8(j: u8) -> Option<Self> {
        match j {
            0 => Some(Self::Zero),
            1 => Some(Self::One),
            _ => None,
        }
    }

    /// `jπ`.
    fn phase(self) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::One => PI,
        }
    }
}

impl From<Outcome> for u8 {
    fn from(o: Outcome) -> u8 {
        o.as_u8()
    }
}

impl TryFrom<u8> for Outcome {
    type Error = Error;

    fn try_from(j: u8) -> Result<Self> {
        Outcome::from_u8(j).ok_or(Error::InvalidProbe("outcome must be 0 or 1"))
    }
}

/// Fringe offset `A`, contrast `B`, phase shift per photon `Φ` and the four
/// detection angles `φ_a..φ_d` (radians).
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ProbeParams {
    pub offset: f64,
    pub contrast: f64,
    pub phase_per_photon: f64,
    pub phases: [f64; 4],
}

impl ProbeParams {
    pub fn new(offset: f64, contrast: f64, phase_per_photon: f64, phases: [f64; 4]) -> Result<Self> {
        let p = Self {
            offset,
            contrast,
            phase_per_photon,
            phases,
        };
        p.validate()?;
        Ok(p)
    }

    /// Calibrated operating point: `A = 0.907`, `B = 0.674`, `Φ = 0.233π`,
    /// `φ/π = (−0.464, −0.229, −0.015, +0.261)`.
    pub fn experiment() -> Self {
        Self {
            offset: 0.907,
            contrast: 0.674,
            phase_per_photon: 0.233 * PI,
            phases: [-0.464 * PI, -0.229 * PI, -0.015 * PI, 0.261 * PI],
        }
    }

    /// Perfect fringes with `Φ = π/4` and `φ = (−π/2, −π/4, 0, π/4)`.
    pub fn ideal() -> Self {
        Self::ideal_with(4)
    }

    /// Perfect fringes with `Φ = π/q` and detection angles `lπ/q`, `l = −2..=1`,
    /// wrapped into (−π, π].
    pub fn ideal_with(q: u32) -> Self {
        let step = PI / f64::from(q.max(1));
        Self {
            offset: 1.0,
            contrast: 1.0,
            phase_per_photon: step,
            phases: [-2.0, -1.0, 0.0, 1.0].map(|l: f64| wrap_angle(l * step)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (a, b) = (self.offset, self.contrast);
        if !(a.is_finite() && b.is_finite()) || b < 0.0 || b > a || a + b > 2.0 {
            return Err(Error::InvalidProbe("need 0 <= B <= A and A + B <= 2"));
        }
        if !(self.phase_per_photon > 0.0 && self.phase_per_photon <= PI) {
            return Err(Error::InvalidProbe("phase per photon must lie in (0, pi]"));
        }
        if self.phases.iter().any(|&p| !(p > -PI && p <= PI)) {
            return Err(Error::InvalidProbe("detection phases must lie in (-pi, pi]"));
        }
        Ok(())
    }

    pub fn phase(&self, i: PhaseIndex) -> f64 {
        self.phases[i.index()]
    }

    /// `A + B cos(nΦ − φ + jπ)` for real `n`; twice the outcome probability.
    pub fn fringe_factor(&self, outcome: Outcome, phase: f64, n: f64) -> f64 {
        self.offset + self.contrast * cos(n * self.phase_per_photon - phase + outcome.phase())
    }

    /// `P(j, φ | n) = [A + B cos(nΦ − φ + jπ)] / 2`.
    pub fn conditional_probability(&self, outcome: Outcome, phase: f64, n: usize) -> f64 {
        0.5 * self.fringe_factor(outcome, phase, n as f64)
    }

    /// Same as [`conditional_probability`](Self::conditional_probability)
    /// with the angle taken from a detection direction.
    pub fn likelihood(&self, outcome: Outcome, i: PhaseIndex, n: usize) -> f64 {
        self.conditional_probability(outcome, self.phase(i), n)
    }
}

impl Default for ProbeParams {
    fn default() -> Self {
        Self::experiment()
    }
}

/// Vacuum Rabi angular frequency `Ω`, detuning `δ` (both rad/s), mode waist
/// `w` (m) and atomic velocity `v` (m/s).
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PhysicalParams {
    pub rabi: f64,
    pub detuning: f64,
    pub waist: f64,
    pub velocity: f64,
}

impl PhysicalParams {
    /// `Ω/2π = 50 kHz`, `δ/2π = 300 kHz`, `w = 6 mm`, `v = 250 m/s`.
    pub fn experiment() -> Self {
        Self {
            rabi: 2.0 * PI * 50e3,
            detuning: 2.0 * PI * 300e3,
            waist: 6e-3,
            velocity: 250.0,
        }
    }
}

/// Dispersive phase shift per photon `Ω² t / (2δ)`.
pub fn phase_per_photon(phys: &PhysicalParams, t_eff: f64) -> Result<f64> {
    if phys.detuning == 0.0 {
        return Err(Error::ZeroDetuning);
    }
    Ok(phys.rabi * phys.rabi * t_eff / (2.0 * phys.detuning))
}

/// Effective interaction time across a gaussian mode, `sqrt(π/2) w / v`.
pub fn effective_interaction_time(phys: &PhysicalParams) -> f64 {
    sqrt(PI / 2.0) * phys.waist / phys.velocity
}

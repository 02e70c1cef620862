//! Bayesian decimation of the photon-number distribution.
//!
//! Each detected atom multiplies the distribution by its fringe likelihood
//! and renormalizes. Batches accumulate the product in the log domain; exact
//! zeros (possible with ideal fringes) are tracked in a separate mask so
//! that decimated photon numbers stay exactly at probability zero.

use alloc::vec;
use alloc::vec::Vec;

use crate::field::PhotonDistribution;
use crate::math::{exp, ln, round, PI};
use crate::probe::{Outcome, PhaseIndex, ProbeParams};
use crate::{Error, Result};

/// Default threshold on the largest posterior entry for [`convergence_status`].
pub const DEFAULT_CONVERGENCE_THRESHOLD: f64 = 0.95;
/// Default grid spacing for [`product_profile`].
pub const DEFAULT_PROFILE_STEP: f64 = 0.01;
/// Photon-number support of the decoder, `n = 0..=7`.
pub const DECODER_N_MAX: usize = 7;

/// One detected atom: the `(j, i)` doublet plus bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DetectionRecord {
    pub seq_id: u64,
    /// 1-based atom index within the sequence.
    pub k: u32,
    /// Detection time from the start of the sequence (s).
    pub t: f64,
    pub phase: PhaseIndex,
    pub outcome: Outcome,
    /// Simulator ground truth; absent for measured data.
    pub truth_n: Option<u32>,
}

/// Log-domain running product `Π_N(n) = ∏_k [A + B cos(nΦ − φ_k + j_k π)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogAccumulator {
    log_weights: Vec<f64>,
    zero_mask: Vec<bool>,
}

impl LogAccumulator {
    pub fn new(n_max: usize) -> Self {
        Self {
            log_weights: vec![0.0; n_max + 1],
            zero_mask: vec![false; n_max + 1],
        }
    }

    pub fn n_max(&self) -> usize {
        self.log_weights.len() - 1
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn zero_mask(&self) -> &[bool] {
        &self.zero_mask
    }

    /// Multiplies in one atom's fringe factor.
    pub fn absorb(&mut self, params: &ProbeParams, outcome: Outcome, i: PhaseIndex) {
        let phase = params.phase(i);
        for n in 0..self.log_weights.len() {
            let f = params.fringe_factor(outcome, phase, n as f64);
            if f <= 0.0 {
                self.zero_mask[n] = true;
            } else {
                self.log_weights[n] += ln(f);
            }
        }
    }

    /// `P_0(n) Π_N(n) / Z`.
    pub fn posterior(&self, prior: &PhotonDistribution) -> Result<PhotonDistribution> {
        if prior.n_max() != self.n_max() {
            return Err(Error::InvalidDistribution("prior support differs from accumulator"));
        }
        normalize_log(prior.probs(), &self.log_weights, |n| self.zero_mask[n])
    }
}

fn normalize_log(
    prior: &[f64],
    log_weights: &[f64],
    is_zero: impl Fn(usize) -> bool,
) -> Result<PhotonDistribution> {
    let logs: Vec<f64> = (0..prior.len())
        .map(|n| {
            if is_zero(n) || prior[n] == 0.0 {
                f64::NEG_INFINITY
            } else {
                ln(prior[n]) + log_weights[n]
            }
        })
        .collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::ImpossibleRecord);
    }
    PhotonDistribution::from_weights(logs.iter().map(|&l| exp(l - max)).collect())
}

/// A priori probability of reading `outcome` along direction `i`,
/// `P(j, φ) = Σ_n P(j, φ|n) P_0(n)`.
pub fn outcome_probability(
    prior: &PhotonDistribution,
    params: &ProbeParams,
    outcome: Outcome,
    i: PhaseIndex,
) -> f64 {
    prior
        .probs()
        .iter()
        .enumerate()
        .map(|(n, p)| p * params.likelihood(outcome, i, n))
        .sum()
}

/// Single-atom Bayes rule `P(n|j, φ) = P_0(n) P(j, φ|n) / P(j, φ)`.
pub fn bayes_update(
    prior: &PhotonDistribution,
    params: &ProbeParams,
    rec: &DetectionRecord,
) -> Result<PhotonDistribution> {
    let weights: Vec<f64> = prior
        .probs()
        .iter()
        .enumerate()
        .map(|(n, p)| p * params.likelihood(rec.outcome, rec.phase, n).max(0.0))
        .collect();
    PhotonDistribution::from_weights(weights)
}

/// Product posterior over a whole record batch.
pub fn batch_posterior(
    prior: &PhotonDistribution,
    params: &ProbeParams,
    recs: &[DetectionRecord],
) -> Result<(PhotonDistribution, LogAccumulator)> {
    let mut acc = LogAccumulator::new(prior.n_max());
    for r in recs {
        acc.absorb(params, r.outcome, r.phase);
    }
    let post = acc.posterior(prior)?;
    Ok((post, acc))
}

/// `Π_N(n)` on a continuous grid of photon numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileCurve {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

impl ProfileCurve {
    /// Trapezoidal integral of the curve over its grid.
    pub fn integral(&self) -> f64 {
        trapezoid(&self.grid, &self.values)
    }

    /// Grid point of the highest value.
    pub fn peak(&self) -> f64 {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        self.grid[best]
    }
}

fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}

/// Span of the profile grid: one period `2q` of the clock, where `q` is the
/// integer nearest to `π/Φ`.
pub fn profile_span(params: &ProbeParams) -> f64 {
    2.0 * round(PI / params.phase_per_photon).max(1.0)
}

/// Evaluates `Π_N` for `n` treated as continuous on `[0, 2q]` with the given
/// step, normalized to unit trapezoidal integral.
pub fn product_profile(
    params: &ProbeParams,
    recs: &[DetectionRecord],
    step: f64,
) -> Result<ProfileCurve> {
    let span = profile_span(params);
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::GridStep(step));
    }
    let cells = span / step;
    let count = round(cells);
    if (cells - count).abs() > 1e-6 * cells.max(1.0) || count < 1.0 {
        return Err(Error::GridStep(step));
    }
    let count = count as usize;
    let grid: Vec<f64> = (0..=count).map(|c| span * c as f64 / count as f64).collect();

    let mut logs = Vec::with_capacity(grid.len());
    for &n in &grid {
        let mut l = 0.0;
        for r in recs {
            let f = params.fringe_factor(r.outcome, params.phase(r.phase), n);
            if f <= 0.0 {
                l = f64::NEG_INFINITY;
                break;
            }
            l += ln(f);
        }
        logs.push(l);
    }
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::ImpossibleRecord);
    }
    let mut values: Vec<f64> = logs.iter().map(|&l| exp(l - max)).collect();
    let area = trapezoid(&grid, &values);
    if !(area > 0.0) {
        return Err(Error::ImpossibleRecord);
    }
    for v in &mut values {
        *v /= area;
    }
    Ok(ProfileCurve { grid, values })
}

/// One point of a sliding-window trace.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EstimateSample {
    pub t: f64,
    pub mean_n: f64,
    pub max_prob: f64,
    pub argmax_n: usize,
}

impl EstimateSample {
    pub fn from_distribution(t: f64, dist: &PhotonDistribution) -> Self {
        let argmax_n = dist.argmax();
        Self {
            t,
            mean_n: dist.mean(),
            max_prob: dist.get(argmax_n),
            argmax_n,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EstimateTrace {
    pub samples: Vec<EstimateSample>,
}

/// Sliding-window product posterior over the last `window` atoms.
///
/// Log factors for the eight `(i, j)` combinations are tabulated once; the
/// window then adds the newest atom and removes the oldest. The sums are
/// rebuilt from scratch every `window` steps so rounding cannot drift.
pub struct SlidingWindow<'a> {
    prior: &'a PhotonDistribution,
    window: usize,
    // [phase][outcome][n]: ln factor, or None for an exact zero.
    table: [[Vec<Option<f64>>; 2]; 4],
    log_sum: Vec<f64>,
    zeros: Vec<u32>,
}

impl<'a> SlidingWindow<'a> {
    pub fn new(params: &ProbeParams, prior: &'a PhotonDistribution, window: usize) -> Self {
        let len = prior.len();
        let table = PhaseIndex::ALL.map(|i| {
            [Outcome::Zero, Outcome::One].map(|o| {
                (0..len)
                    .map(|n| {
                        let f = params.fringe_factor(o, params.phase(i), n as f64);
                        (f > 0.0).then(|| ln(f))
                    })
                    .collect()
            })
        });
        Self {
            prior,
            window,
            table,
            log_sum: vec![0.0; len],
            zeros: vec![0; len],
        }
    }

    fn add(&mut self, r: &DetectionRecord, sign: f64) {
        let row = &self.table[r.phase.index()][r.outcome.as_u8() as usize];
        for (n, f) in row.iter().enumerate() {
            match f {
                Some(l) => self.log_sum[n] += sign * l,
                None if sign > 0.0 => self.zeros[n] += 1,
                None => self.zeros[n] -= 1,
            }
        }
    }

    fn rebuild(&mut self, recs: &[DetectionRecord]) {
        self.log_sum.iter_mut().for_each(|x| *x = 0.0);
        self.zeros.iter_mut().for_each(|x| *x = 0);
        for r in recs {
            let row = &self.table[r.phase.index()][r.outcome.as_u8() as usize];
            for (n, f) in row.iter().enumerate() {
                match f {
                    Some(l) => self.log_sum[n] += l,
                    None => self.zeros[n] += 1,
                }
            }
        }
    }

    fn posterior(&self) -> Result<PhotonDistribution> {
        normalize_log(self.prior.probs(), &self.log_sum, |n| self.zeros[n] > 0)
    }

    /// Runs the window over a record stream.
    pub fn run(mut self, recs: &[DetectionRecord]) -> Result<EstimateTrace> {
        let w = self.window;
        let mut samples = Vec::with_capacity(recs.len().saturating_sub(w) + 1);
        if w == 0 || recs.len() < w {
            return Ok(EstimateTrace { samples });
        }
        self.rebuild(&recs[..w]);
        for end in w..=recs.len() {
            if end > w {
                let steps = end - w;
                if steps.is_multiple_of(w) {
                    self.rebuild(&recs[end - w..end]);
                } else {
                    self.add(&recs[end - w - 1], -1.0);
                    self.add(&recs[end - 1], 1.0);
                }
            }
            let post = self.posterior()?;
            samples.push(EstimateSample::from_distribution(recs[end - 1].t, &post));
        }
        Ok(EstimateTrace { samples })
    }
}

/// For each `k >= window`, the posterior of atoms `k−window+1..=k` started
/// from `prior`. Fewer records than `window` gives an empty trace.
pub fn sliding_estimates(
    recs: &[DetectionRecord],
    params: &ProbeParams,
    window: usize,
    prior: &PhotonDistribution,
) -> Result<EstimateTrace> {
    if window == 0 {
        return Err(Error::InvalidConfig("window must be at least 1"));
    }
    SlidingWindow::new(params, prior, window).run(recs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Convergence {
    Converged(usize),
    NotConverged,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConvergenceReport {
    pub status: Convergence,
    /// Second-largest over largest probability.
    pub satellite_ratio: f64,
}

pub fn convergence_status(dist: &PhotonDistribution, threshold: f64) -> ConvergenceReport {
    let best = dist.argmax();
    let top = dist.get(best);
    let second = dist
        .probs()
        .iter()
        .enumerate()
        .filter(|&(n, _)| n != best)
        .map(|(_, &p)| p)
        .fold(0.0, f64::max);
    let status = if top >= threshold {
        Convergence::Converged(best)
    } else {
        Convergence::NotConverged
    };
    ConvergenceReport {
        status,
        satellite_ratio: if top > 0.0 { second / top } else { 0.0 },
    }
}

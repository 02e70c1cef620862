//! Ensemble statistics over decoded sequences: the histogram of final mean
//! photon numbers and its Poisson-peak fit, staircases extracted from
//! sliding-window traces, dwell times and jump-detection latencies.

use alloc::vec;
use alloc::vec::Vec;

use crate::decoder::{EstimateSample, EstimateTrace};
use crate::field::CavityParams;
use crate::math::{exp, ln, ln_gamma, round, sqrt};
use crate::sim::{fock_lifetime, TruthEvent};
use crate::{Error, Result};

pub const DEFAULT_BIN_WIDTH: f64 = 0.2;
/// Consecutive samples required before a staircase level is entered.
pub const DEFAULT_STABILITY: usize = 20;
/// Smallest peak posterior for a sample to count toward a stable level.
pub const STAIR_MIN_PROB: f64 = 0.8;

/// Histogram of mean photon numbers with integer values at bin centres.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MeanHistogram {
    pub bin_width: f64,
    pub n_max: usize,
    pub counts: Vec<u64>,
    pub total_count: u64,
}

impl MeanHistogram {
    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn center(&self, bin: usize) -> f64 {
        bin as f64 * self.bin_width
    }

    /// `(lower, upper)` edges of a bin.
    pub fn edges(&self, bin: usize) -> (f64, f64) {
        let c = self.center(bin);
        (c - 0.5 * self.bin_width, c + 0.5 * self.bin_width)
    }

    pub fn mass(&self, bin: usize) -> f64 {
        self.counts[bin] as f64 / self.total_count as f64
    }

    pub fn masses(&self) -> Vec<f64> {
        (0..self.bins()).map(|b| self.mass(b)).collect()
    }

    /// Bin whose centre is the integer `n`, if any.
    pub fn integer_bin(&self, n: usize) -> Option<usize> {
        let k = round(n as f64 / self.bin_width);
        let bin = k as usize;
        ((k * self.bin_width - n as f64).abs() < 1e-9 && bin < self.bins()).then_some(bin)
    }

    fn bin_of(&self, x: f64) -> usize {
        let k = round(x / self.bin_width).max(0.0) as usize;
        k.min(self.bins() - 1)
    }
}

/// Bins final mean photon numbers over `[−w/2, n_max + w/2]`.
pub fn ensemble_histogram(estimates: &[f64], bin_width: f64, n_max: usize) -> Result<MeanHistogram> {
    if estimates.is_empty() {
        return Err(Error::Empty("no estimates to histogram"));
    }
    if !(bin_width > 0.0 && bin_width <= 1.0) {
        return Err(Error::InvalidConfig("bin width must lie in (0, 1]"));
    }
    let bins = round(n_max as f64 / bin_width) as usize + 1;
    let mut hist = MeanHistogram {
        bin_width,
        n_max,
        counts: vec![0; bins],
        total_count: estimates.len() as u64,
    };
    for &x in estimates {
        let b = hist.bin_of(x);
        hist.counts[b] += 1;
    }
    Ok(hist)
}

/// `true` when a final estimate falls in an integer-centred bin.
pub fn is_integer_estimate(mean_n: f64, bin_width: f64) -> bool {
    let k = round(mean_n / bin_width);
    let c = k * bin_width;
    (c - round(c)).abs() < 1e-9
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PoissonPeakFit {
    pub lambda_hat: f64,
    pub background_fraction: f64,
    /// Mass of the integer-centred bin of each photon number `0..=n_max`.
    pub peak_masses: Vec<f64>,
}

impl PoissonPeakFit {
    pub fn total_peak_mass(&self) -> f64 {
        self.peak_masses.iter().sum()
    }

    /// Peak mass predicted at `n` by the fitted Poisson law, scaled so that
    /// it reproduces the observed mass of the peaks `1..=n_max`. The `n = 0`
    /// value is an extrapolation, which exposes any alias excess there.
    pub fn predicted_mass(&self, n: usize) -> f64 {
        let n_max = self.peak_masses.len() - 1;
        if self.lambda_hat == 0.0 {
            return if n == 0 { self.total_peak_mass() } else { 0.0 };
        }
        let observed: f64 = self.peak_masses[1..].iter().sum();
        let model: f64 = (1..=n_max).map(|k| poisson_pmf(self.lambda_hat, k)).sum();
        observed / model * poisson_pmf(self.lambda_hat, n)
    }
}

pub fn poisson_pmf(lambda: f64, n: usize) -> f64 {
    if lambda == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    exp(n as f64 * ln(lambda) - lambda - ln_gamma(n as f64 + 1.0))
}

/// Mean of a Poisson law conditioned on `1 <= n <= n_max`.
fn truncated_mean(lambda: f64, n_max: usize) -> f64 {
    let logs: Vec<f64> = (1..=n_max)
        .map(|n| n as f64 * ln(lambda) - ln_gamma(n as f64 + 1.0))
        .collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (mut num, mut den) = (0.0, 0.0);
    for (k, l) in logs.iter().enumerate() {
        let w = exp(l - top);
        num += (k + 1) as f64 * w;
        den += w;
    }
    num / den
}

/// Fits a Poisson law to the integer peaks; everything off the integer bins
/// is background.
///
/// The decoder only resolves `n` modulo its aliasing period, so the `n = 0`
/// peak also collects aliased high photon numbers and the histogram stops at
/// `n_max`. The mean is therefore the maximum-likelihood estimate for a
/// Poisson law conditioned on `1 <= n <= n_max`, fitted to the peaks
/// `1..=n_max`. It solves "conditional mean = peak-weighted mean of `n`",
/// which is monotone in the rate and is found by bisection.
pub fn fit_poisson_peaks(hist: &MeanHistogram) -> Result<PoissonPeakFit> {
    let peak_masses: Vec<f64> = (0..=hist.n_max)
        .map(|n| hist.integer_bin(n).map_or(0.0, |b| hist.mass(b)))
        .collect();
    let total: f64 = peak_masses.iter().sum();
    if !(total > 0.0) {
        return Err(Error::NoPeakMass);
    }
    let upper: f64 = peak_masses[1..].iter().sum();
    let lambda_hat = if upper == 0.0 {
        0.0
    } else {
        let target = peak_masses
            .iter()
            .enumerate()
            .skip(1)
            .map(|(n, m)| n as f64 * m)
            .sum::<f64>()
            / upper;
        solve_truncated_rate(target, hist.n_max)?
    };
    Ok(PoissonPeakFit {
        lambda_hat,
        background_fraction: (1.0 - total).max(0.0),
        peak_masses,
    })
}

fn solve_truncated_rate(target: f64, n_max: usize) -> Result<f64> {
    if target <= 1.0 {
        return Ok(0.0);
    }
    if target >= n_max as f64 - 1e-12 {
        return Err(Error::Degenerate("all peak mass above zero sits at n_max"));
    }
    let mut hi = 1.0;
    while truncated_mean(hi, n_max) < target {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if truncated_mean(mid, n_max) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Step {
    pub level: u32,
    pub t_start: f64,
    pub t_end: f64,
}

/// Contiguous, time-ordered photon-number plateaus.
#[derive(Debug, Clone, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Staircase {
    pub steps: Vec<Step>,
}

impl Staircase {
    /// Level at time `t`; the last step includes its end point.
    pub fn level_at(&self, t: f64) -> Option<u32> {
        let last = self.steps.last()?;
        if t == last.t_end && t >= last.t_start {
            return Some(last.level);
        }
        self.steps
            .iter()
            .find(|s| t >= s.t_start && t < s.t_end)
            .map(|s| s.level)
    }

    /// Turns the staircase back into a trace sampled at `times`, keeping
    /// only times it covers.
    pub fn render(&self, times: &[f64]) -> EstimateTrace {
        let samples = times
            .iter()
            .filter_map(|&t| {
                self.level_at(t).map(|level| EstimateSample {
                    t,
                    mean_n: f64::from(level),
                    max_prob: 1.0,
                    argmax_n: level as usize,
                })
            })
            .collect();
        EstimateTrace { samples }
    }

    pub fn is_monotone_descending(&self) -> bool {
        self.steps.windows(2).all(|w| w[1].level < w[0].level)
    }
}

/// Plateaus of `round(⟨n⟩)` held for `stability` consecutive samples with
/// peak posterior at least [`STAIR_MIN_PROB`]. A level change starts its
/// step at the first sample of the new stable run.
pub fn extract_staircase(trace: &EstimateTrace, stability: usize) -> Result<Staircase> {
    if stability == 0 {
        return Err(Error::InvalidConfig("stability must be at least 1"));
    }
    let mut steps: Vec<Step> = Vec::new();
    let mut run: Option<(u32, f64, usize)> = None;
    for s in &trace.samples {
        let level = (s.max_prob >= STAIR_MIN_PROB).then(|| round(s.mean_n).max(0.0) as u32);
        run = match (run, level) {
            (Some((l, start, len)), Some(q)) if l == q => Some((l, start, len + 1)),
            (_, Some(q)) => Some((q, s.t, 1)),
            (_, None) => None,
        };
        if let Some((l, start, len)) = run {
            if len == stability && steps.last().map(|st| st.level) != Some(l) {
                if let Some(prev) = steps.last_mut() {
                    prev.t_end = start;
                }
                steps.push(Step {
                    level: l,
                    t_start: start,
                    t_end: s.t,
                });
            }
        }
    }
    if let (Some(last), Some(s)) = (steps.last_mut(), trace.samples.last()) {
        last.t_end = s.t;
    }
    Ok(Staircase { steps })
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Dwell {
    pub level: u32,
    pub duration: f64,
}

/// Complete dwells of a truth log. The open-ended last level is dropped;
/// the first one starts at the initial draw and is kept.
pub fn truth_dwells(truth: &[TruthEvent]) -> Vec<Dwell> {
    truth
        .windows(2)
        .map(|w| Dwell {
            level: w[0].n_after,
            duration: w[1].t - w[0].t,
        })
        .collect()
}

/// Interior steps of a staircase; the first and last are censored.
pub fn staircase_dwells(stairs: &Staircase) -> Vec<Dwell> {
    let n = stairs.steps.len();
    if n < 3 {
        return Vec::new();
    }
    stairs.steps[1..n - 1]
        .iter()
        .map(|s| Dwell {
            level: s.level,
            duration: s.t_end - s.t_start,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DwellStat {
    pub level: u32,
    pub count: usize,
    pub mean: f64,
    /// Standard error of the mean; NaN with fewer than two dwells.
    pub std_error: f64,
    /// `T_c / [n + n_t(2n+1)]`.
    pub expected: f64,
}

/// Per-level mean dwell against the Fock-state lifetime.
pub fn dwell_statistics(dwells: &[Dwell], cavity: &CavityParams) -> Vec<DwellStat> {
    let max_level = match dwells.iter().map(|d| d.level).max() {
        Some(m) => m,
        None => return Vec::new(),
    };
    let mut sums = vec![(0usize, 0.0f64, 0.0f64); max_level as usize + 1];
    for d in dwells {
        let e = &mut sums[d.level as usize];
        e.0 += 1;
        e.1 += d.duration;
        e.2 += d.duration * d.duration;
    }
    sums.iter()
        .enumerate()
        .filter(|(_, s)| s.0 > 0)
        .map(|(level, &(count, sum, sum_sq))| {
            let c = count as f64;
            let mean = sum / c;
            let std_error = if count > 1 {
                let var = ((sum_sq - c * mean * mean) / (c - 1.0)).max(0.0);
                sqrt(var / c)
            } else {
                f64::NAN
            };
            DwellStat {
                level: level as u32,
                count,
                mean,
                std_error,
                expected: fock_lifetime(level as u32, cavity),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct JumpLatency {
    pub from: u32,
    pub to: u32,
    pub truth_t: f64,
    pub decoded_t: f64,
    pub latency: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LatencyReport {
    pub matched: Vec<JumpLatency>,
    /// Downward decoded steps `(from, to, t)` with no preceding truth jump.
    pub unmatched: Vec<(u32, u32, f64)>,
}

impl LatencyReport {
    pub fn latencies(&self) -> Vec<f64> {
        self.matched.iter().map(|m| m.latency).collect()
    }
}

/// Matches each downward decoded step to the latest truth jump of the same
/// transition at or before the decoded boundary.
pub fn jump_latency(stairs: &Staircase, truth: &[TruthEvent]) -> LatencyReport {
    let mut report = LatencyReport::default();
    for w in stairs.steps.windows(2) {
        let (from, to, t) = (w[0].level, w[1].level, w[1].t_start);
        if to >= from {
            continue;
        }
        let hit = truth
            .windows(2)
            .rev()
            .find(|e| e[0].n_after == from && e[1].n_after == to && e[1].t <= t)
            .map(|e| e[1].t);
        match hit {
            Some(truth_t) => report.matched.push(JumpLatency {
                from,
                to,
                truth_t,
                decoded_t: t,
                latency: t - truth_t,
            }),
            None => report.unmatched.push((from, to, t)),
        }
    }
    report
}

/// Median of a sample; `None` when empty.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    })
}

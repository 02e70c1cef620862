//! Fringe calibration from a weak coherent field.
//!
//! Batches of atoms cross the cavity while it holds a frozen photon number
//! drawn from Poisson(n0_cal) on `n = 0..=4`. The fraction η₀ of `j = 0`
//! readings of a batch is binomial around `[A + B cos(nΦ − φ_i)] / 2`, so the
//! η₀ values of each direction form five peaks. The fit maximizes the
//! likelihood of the observed counts under that five-component binomial
//! mixture over `(A, B, Φ, φ_a..φ_d)`.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::math::{cos, ln, ln_binomial, log_sum_exp, round, sqrt, wrap_angle, PI};
use crate::optim::{nelder_mead, Minimum, NelderMeadOptions};
use crate::probe::{PhaseIndex, ProbeParams};
use crate::sim::{outcome_zero_probability, sequence_rng, SimConfig};
use crate::{Error, Result};

/// Photon numbers kept in the calibration field, `0..=CAL_N_MAX`.
pub const CAL_N_MAX: usize = 4;
/// Mean photon number of the calibration field.
pub const CAL_N0: f64 = 1.2;
/// Random stream reserved for calibration runs.
const CALIBRATION_STREAM: u64 = u64::MAX;
/// Number of fitted parameters `(A, B, Φ, φ_a, φ_b, φ_c, φ_d)`.
pub const N_PARAMS: usize = 7;

/// One batch: fraction of `j = 0` readings and batch size.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CalibrationBatch {
    pub eta0: f64,
    pub batch_size: u32,
}

impl CalibrationBatch {
    pub fn zeros(&self) -> u32 {
        round(self.eta0 * f64::from(self.batch_size)) as u32
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CalibrationSamples {
    pub per_phase: [Vec<CalibrationBatch>; 4],
}

impl CalibrationSamples {
    pub fn push(&mut self, phase: PhaseIndex, batch: CalibrationBatch) {
        self.per_phase[phase.index()].push(batch);
    }

    pub fn batches(&self, phase: PhaseIndex) -> &[CalibrationBatch] {
        &self.per_phase[phase.index()]
    }

    pub fn len(&self) -> usize {
        self.per_phase.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Poisson(n0) weights on `0..=4`, renormalized.
pub fn calibration_weights(n0: f64) -> [f64; CAL_N_MAX + 1] {
    let mut w = [0.0; CAL_N_MAX + 1];
    let mut p = crate::math::exp(-n0);
    for (n, slot) in w.iter_mut().enumerate() {
        if n > 0 {
            p *= n0 / n as f64;
        }
        *slot = p;
    }
    let total: f64 = w.iter().sum();
    w.map(|x| x / total)
}

/// Simulates `batches` calibration batches of `batch_size` atoms, with the
/// photon number frozen within a batch and directions cycled across batches.
/// The field mean is `config.n0`; probe, outcome mode and seed come from the
/// config as well.
pub fn simulate_calibration_run(
    config: &SimConfig,
    batches: usize,
    batch_size: u32,
) -> Result<CalibrationSamples> {
    if batch_size == 0 {
        return Err(Error::InvalidConfig("batch size must be at least 1"));
    }
    if !(config.n0 >= 0.0) {
        return Err(Error::NegativeMean(config.n0));
    }
    config.probe.validate()?;
    let weights = calibration_weights(config.n0);
    let mut rng = sequence_rng(config.seed, CALIBRATION_STREAM);
    let mut samples = CalibrationSamples::default();
    for b in 0..batches {
        let phase = PhaseIndex::ALL[b % 4];
        let u: f64 = rng.random();
        let mut cdf = 0.0;
        let mut n = CAL_N_MAX as u32;
        for (k, w) in weights.iter().enumerate() {
            cdf += w;
            if u < cdf {
                n = k as u32;
                break;
            }
        }
        let p0 = outcome_zero_probability(&config.probe, phase, n, config.outcome_mode)?;
        let zeros = (0..batch_size).filter(|_| rng.random::<f64>() < p0).count() as u32;
        samples.push(
            phase,
            CalibrationBatch {
                eta0: f64::from(zeros) / f64::from(batch_size),
                batch_size,
            },
        );
    }
    Ok(samples)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CalibrationFit {
    pub params: ProbeParams,
    /// Standard errors of `(A, B, Φ, φ_a, φ_b, φ_c, φ_d)` from the observed
    /// information.
    pub std_errors: [f64; N_PARAMS],
    /// Final negative log-likelihood.
    pub objective: f64,
    /// Set when the optimum sits on an edge of the feasible region.
    pub boundary_warning: bool,
    pub evaluations: usize,
}

const RESCAN_POINTS: usize = 72;
const MAX_RESCANS: usize = 4;
// Log-likelihood gain over flat fringes below which the fringe parameters
// count as unidentified. Six extra parameters, so this is far above noise.
const FLAT_LOG_RATIO: f64 = 15.0;

// (batch size, zeros, multiplicity, ln C(m, k))
type CountGroup = (u32, u32, f64, f64);

/// Mixture-likelihood objective over the seven fringe parameters.
#[derive(Debug, Clone)]
pub struct CalibrationProblem {
    weights: [f64; CAL_N_MAX + 1],
    groups: [Vec<CountGroup>; 4],
    a_guess: f64,
}

fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * ln(y)
    }
}

/// `true` when `(A, B, Φ)` lies inside the identifiable region.
fn feasible(x: &[f64]) -> bool {
    let (a, b, phi) = (x[0], x[1], x[2]);
    b >= 0.0 && b <= a && a + b <= 2.0 && phi > 0.0 && phi < PI / 2.0
}

impl CalibrationProblem {
    pub fn new(samples: &CalibrationSamples, n0_cal: f64) -> Result<Self> {
        if !(n0_cal >= 0.0) {
            return Err(Error::NegativeMean(n0_cal));
        }
        let mut groups: [Vec<CountGroup>; 4] = Default::default();
        let mut eta_sum = 0.0;
        let mut count = 0usize;
        for i in PhaseIndex::ALL {
            let batches = samples.batches(i);
            if batches.is_empty() {
                return Err(Error::MissingPhase(i.letter()));
            }
            let mut counts: Vec<(u32, u32, f64)> = Vec::new();
            for b in batches {
                if b.batch_size == 0 || !(0.0..=1.0).contains(&b.eta0) {
                    return Err(Error::InvalidConfig("calibration batch out of range"));
                }
                eta_sum += b.eta0;
                count += 1;
                let key = (b.batch_size, b.zeros());
                match counts.iter_mut().find(|c| (c.0, c.1) == key) {
                    Some(c) => c.2 += 1.0,
                    None => counts.push((key.0, key.1, 1.0)),
                }
            }
            groups[i.index()] = counts
                .into_iter()
                .map(|(m, k, mult)| (m, k, mult, ln_binomial(m, k)))
                .collect();
        }
        Ok(Self {
            weights: calibration_weights(n0_cal),
            groups,
            a_guess: (2.0 * eta_sum / count as f64).clamp(0.1, 1.9),
        })
    }

    fn phase_nll(&self, a: f64, b: f64, phi: f64, phase: f64, i: usize) -> f64 {
        let mut log_p = [0.0; CAL_N_MAX + 1];
        let mut log_q = [0.0; CAL_N_MAX + 1];
        let mut p = [0.0; CAL_N_MAX + 1];
        for n in 0..=CAL_N_MAX {
            let v = (0.5 * (a + b * cos(n as f64 * phi - phase))).clamp(0.0, 1.0);
            p[n] = v;
            log_p[n] = ln(v);
            log_q[n] = ln(1.0 - v);
        }
        let mut terms = [0.0; CAL_N_MAX + 1];
        let mut total = 0.0;
        for &(m, k, mult, ln_c) in &self.groups[i] {
            let (k, rest) = (f64::from(k), f64::from(m - k));
            for n in 0..=CAL_N_MAX {
                let lk = if k == 0.0 { 0.0 } else if p[n] == 0.0 { f64::NEG_INFINITY } else { k * log_p[n] };
                let lr = if rest == 0.0 { 0.0 } else if p[n] == 1.0 { f64::NEG_INFINITY } else { rest * log_q[n] };
                terms[n] = xlogy(1.0, self.weights[n]) + ln_c + lk + lr;
            }
            total -= mult * log_sum_exp(&terms);
        }
        total
    }

    /// Negative log-likelihood at `x = (A, B, Φ, φ_a, φ_b, φ_c, φ_d)`;
    /// `+∞` outside the feasible region.
    pub fn objective(&self, x: &[f64]) -> f64 {
        if !feasible(x) {
            return f64::INFINITY;
        }
        (0..4).map(|i| self.phase_nll(x[0], x[1], x[2], x[3 + i], i)).sum()
    }

    /// Coarse start points: a grid over `Φ`, with each direction's angle
    /// picked independently on a 24-point grid.
    pub fn starts(&self) -> Vec<Vec<f64>> {
        let a = self.a_guess;
        let b = 0.5 * a.min(2.0 - a);
        (1..8)
            .map(|c| {
                let phi = c as f64 * PI / 16.0;
                let mut x = vec![a, b, phi, 0.0, 0.0, 0.0, 0.0];
                for i in 0..4 {
                    let mut best = (f64::INFINITY, 0.0);
                    for g in 0..24 {
                        let phase = wrap_angle(-PI + (g as f64 + 1.0) * PI / 12.0);
                        let v = self.phase_nll(a, b, phi, phase, i);
                        if v < best.0 {
                            best = (v, phase);
                        }
                    }
                    x[3 + i] = best.1;
                }
                x
            })
            .collect()
    }

    /// Simplex refinement of one start, restarted once from its own optimum.
    /// Each direction's angle is then rescanned with the other parameters
    /// held fixed; a lower grid value sends the point back to the simplex.
    pub fn refine(&self, start: &[f64]) -> Minimum {
        let mut best = self.simplex(start);
        for _ in 0..MAX_RESCANS {
            let Some(x) = self.rescan_phases(&best) else { break };
            let mut next = self.simplex(&x);
            if next.value >= best.value {
                best.evaluations += next.evaluations;
                break;
            }
            next.evaluations += best.evaluations;
            let floor = best.value;
            let mut history = best.history;
            history.extend(next.history.iter().map(|v| v.min(floor)));
            next.history = history;
            best = next;
        }
        best
    }

    fn simplex(&self, start: &[f64]) -> Minimum {
        let opts = NelderMeadOptions::default();
        let steps = [0.05, 0.05, 0.05, 0.1, 0.1, 0.1, 0.1];
        let f = |x: &[f64]| self.objective(x);
        let first = nelder_mead(f, start, &steps, &opts);
        let small = steps.map(|s| s * 0.1);
        let mut second = nelder_mead(f, &first.x, &small, &opts);
        second.evaluations += first.evaluations;
        let mut history = first.history;
        history.extend(second.history.iter().map(|v| v.min(first.value)));
        second.history = history;
        second
    }

    /// A copy of `m.x` with every angle moved to a strictly better grid
    /// point, or `None` when no grid point improves on the current angles.
    fn rescan_phases(&self, m: &Minimum) -> Option<Vec<f64>> {
        let (a, b, phi) = (m.x[0], m.x[1], m.x[2]);
        let mut x = m.x.clone();
        let mut moved = false;
        for i in 0..4 {
            let current = self.phase_nll(a, b, phi, x[3 + i], i);
            let mut best = (current, x[3 + i]);
            for g in 0..RESCAN_POINTS {
                let phase = wrap_angle(-PI + (g as f64 + 0.5) * 2.0 * PI / RESCAN_POINTS as f64);
                let v = self.phase_nll(a, b, phi, phase, i);
                if v < best.0 - 1e-9 * (1.0 + best.0.abs()) {
                    best = (v, phase);
                }
            }
            if best.1 != x[3 + i] {
                x[3 + i] = best.1;
                moved = true;
            }
        }
        moved.then_some(x)
    }

    /// Minimum of the objective with flat fringes (`B = 0`), where every
    /// batch is binomial with the pooled zero fraction `A/2`.
    pub fn flat_objective(&self) -> f64 {
        let (mut zeros, mut atoms) = (0.0, 0.0);
        for g in &self.groups {
            for &(m, k, mult, _) in g {
                zeros += mult * f64::from(k);
                atoms += mult * f64::from(m);
            }
        }
        let a = (2.0 * zeros / atoms).clamp(1e-12, 2.0 - 1e-12);
        self.objective(&[a, 0.0, PI / 4.0, 0.0, 0.0, 0.0, 0.0])
    }

    /// Turns the best refined minimum into a fit with standard errors.
    pub fn finish(&self, best: Minimum, evaluations: usize) -> Result<CalibrationFit> {
        let x = &best.x;
        if !best.value.is_finite() {
            return Err(Error::Degenerate("no feasible optimum"));
        }
        let hessian = numeric_hessian(|y| self.objective(y), x);
        let covariance = hessian.as_ref().and_then(|h| invert_spd(h));
        let std_errors = match &covariance {
            Some(cov) => core::array::from_fn(|i| sqrt(cov[i * N_PARAMS + i])),
            None if hessian.is_some() => {
                return Err(Error::Degenerate("information matrix is not positive definite"))
            }
            None => [f64::NAN; N_PARAMS],
        };
        let flat_gain = self.flat_objective() - best.value;
        if x[1] < 1e-3 || (std_errors[1].is_finite() && x[1] < 3.0 * std_errors[1]) || flat_gain < FLAT_LOG_RATIO {
            return Err(Error::Degenerate("fringe contrast indistinguishable from zero"));
        }
        let margin = 1e-4;
        let boundary_warning = hessian.is_none()
            || x[1] > x[0] - margin
            || x[0] + x[1] > 2.0 - margin
            || x[2] < margin
            || x[2] > PI / 2.0 - margin;
        let params = ProbeParams {
            offset: x[0],
            contrast: x[1],
            phase_per_photon: x[2],
            phases: [x[3], x[4], x[5], x[6]].map(wrap_angle),
        };
        Ok(CalibrationFit {
            params,
            std_errors,
            objective: best.value,
            boundary_warning,
            evaluations,
        })
    }
}

/// Central-difference Hessian; `None` if any probe point is infeasible.
fn numeric_hessian<F: Fn(&[f64]) -> f64>(f: F, x: &[f64]) -> Option<Vec<f64>> {
    let d = x.len();
    let h = 1e-4;
    let f0 = f(x);
    let mut out = vec![0.0; d * d];
    let mut y = x.to_vec();
    let at = |y: &mut Vec<f64>, i: usize, di: f64, j: usize, dj: f64| {
        y[i] += di;
        y[j] += dj;
        let v = f(y);
        y[i] -= di;
        y[j] -= dj;
        v
    };
    for i in 0..d {
        let plus = at(&mut y, i, h, i, 0.0);
        let minus = at(&mut y, i, -h, i, 0.0);
        out[i * d + i] = (plus - 2.0 * f0 + minus) / (h * h);
        for j in 0..i {
            let pp = at(&mut y, i, h, j, h);
            let pm = at(&mut y, i, h, j, -h);
            let mp = at(&mut y, i, -h, j, h);
            let mm = at(&mut y, i, -h, j, -h);
            let v = (pp - pm - mp + mm) / (4.0 * h * h);
            out[i * d + j] = v;
            out[j * d + i] = v;
        }
    }
    out.iter().all(|v| v.is_finite()).then_some(out)
}

/// Inverse of a symmetric positive-definite matrix via Cholesky; `None` if
/// the matrix is not positive definite.
fn invert_spd(m: &[f64]) -> Option<Vec<f64>> {
    let d = sqrt(m.len() as f64) as usize;
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i * d + k] * l[j * d + k]).sum();
            if i == j {
                let v = m[i * d + i] - s;
                if !(v > 0.0) {
                    return None;
                }
                l[i * d + i] = sqrt(v);
            } else {
                l[i * d + j] = (m[i * d + j] - s) / l[j * d + j];
            }
        }
    }
    // Columns of L⁻¹ by forward substitution, then (L⁻¹)ᵀ L⁻¹.
    let mut inv_l = vec![0.0; d * d];
    for c in 0..d {
        for i in c..d {
            let s: f64 = (c..i).map(|k| l[i * d + k] * inv_l[k * d + c]).sum();
            let rhs = if i == c { 1.0 } else { 0.0 };
            inv_l[i * d + c] = (rhs - s) / l[i * d + i];
        }
    }
    let mut out = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            out[i * d + j] = (0..d).map(|k| inv_l[k * d + i] * inv_l[k * d + j]).sum();
        }
    }
    Some(out)
}

/// Picks the lowest objective; the earliest start wins ties.
pub fn best_of(minima: Vec<Minimum>) -> Option<Minimum> {
    let mut best: Option<Minimum> = None;
    for m in minima {
        if best.as_ref().is_none_or(|b| m.value < b.value) {
            best = Some(m);
        }
    }
    best
}

/// Maximum-likelihood fit of the fringe parameters to calibration batches.
pub fn fit_probe_params(samples: &CalibrationSamples, n0_cal: f64) -> Result<CalibrationFit> {
    let problem = CalibrationProblem::new(samples, n0_cal)?;
    let minima: Vec<Minimum> = problem.starts().iter().map(|s| problem.refine(s)).collect();
    let evaluations = minima.iter().map(|m| m.evaluations).sum();
    let best = best_of(minima).ok_or(Error::Empty("no start points"))?;
    problem.finish(best, evaluations)
}

/// Least-squares solution of the 20 peak equations
/// `η₀(φ_i, n) = [A + B cos(nΦ − φ_i)] / 2`, `n = 0..=4`, for the seven
/// parameters. Returns the parameters and the residual sum of squares.
pub fn fit_peak_positions(peaks: &[[f64; CAL_N_MAX + 1]; 4]) -> Result<(ProbeParams, f64)> {
    let residual = |x: &[f64]| {
        if !feasible(x) {
            return f64::INFINITY;
        }
        let mut s = 0.0;
        for (i, row) in peaks.iter().enumerate() {
            for (n, &target) in row.iter().enumerate() {
                let model = 0.5 * (x[0] + x[1] * cos(n as f64 * x[2] - x[3 + i]));
                s += (model - target) * (model - target);
            }
        }
        s
    };
    let mean: f64 = peaks.iter().flatten().sum::<f64>() / 20.0;
    let a = (2.0 * mean).clamp(0.1, 1.9);
    let b = 0.5 * a.min(2.0 - a);
    let opts = NelderMeadOptions {
        f_tolerance: 1e-28,
        max_evaluations: 40_000,
    };
    let steps = [0.05, 0.05, 0.05, 0.1, 0.1, 0.1, 0.1];
    let mut runs = Vec::new();
    for c in 1..8 {
        let phi = c as f64 * PI / 16.0;
        let mut x = vec![a, b, phi, 0.0, 0.0, 0.0, 0.0];
        for (i, row) in peaks.iter().enumerate() {
            // Angle of the first harmonic of the n = 0 peak relative to the mean.
            let mut best = (f64::INFINITY, 0.0);
            for g in 0..24 {
                let phase = wrap_angle(-PI + (g as f64 + 1.0) * PI / 12.0);
                let err: f64 = row
                    .iter()
                    .enumerate()
                    .map(|(n, &t)| {
                        let m = 0.5 * (a + b * cos(n as f64 * phi - phase));
                        (m - t) * (m - t)
                    })
                    .sum();
                if err < best.0 {
                    best = (err, phase);
                }
            }
            x[3 + i] = best.1;
        }
        let mut m = nelder_mead(residual, &x, &steps, &opts);
        for _ in 0..4 {
            let small = steps.map(|s| s * 0.01);
            m = nelder_mead(residual, &m.x, &small, &opts);
        }
        runs.push(m);
    }
    let best = best_of(runs).ok_or(Error::Empty("no start points"))?;
    let x = best.x;
    let params = ProbeParams {
        offset: x[0],
        contrast: x[1],
        phase_per_photon: x[2],
        phases: [x[3], x[4], x[5], x[6]].map(wrap_angle),
    };
    Ok((params, best.value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::OutcomeMode;

    fn cal_config(probe: ProbeParams, seed: u64) -> SimConfig {
        SimConfig {
            n0: CAL_N0,
            probe,
            outcome_mode: OutcomeMode::Offset,
            seed,
            ..SimConfig::experiment()
        }
    }

    fn angle_diff(a: f64, b: f64) -> f64 {
        wrap_angle(a - b).abs()
    }

    #[test]
    fn weights_are_truncated_poisson() {
        let w = calibration_weights(1.2);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        // Poisson(1.2) keeps 99.225 % of its mass on 0..=4.
        assert!((w[0] - libm::exp(-1.2) / 0.992_254).abs() < 1e-5);
    }

    #[test]
    fn frozen_vacuum_batch_concentrates_on_fringe_value() {
        let probe = ProbeParams::experiment();
        let mut config = cal_config(probe, 1);
        config.n0 = 0.0;
        let samples = simulate_calibration_run(&config, 400, 2000).unwrap();
        for b in samples.batches(PhaseIndex::C) {
            assert!((b.eta0 - 0.790_126).abs() < 4.0 * libm::sqrt(0.79 * 0.21 / 2000.0));
        }
        config.outcome_mode = OutcomeMode::Matched;
        let samples = simulate_calibration_run(&config, 400, 2000).unwrap();
        let mean: f64 = samples.batches(PhaseIndex::C).iter().map(|b| b.eta0).sum::<f64>() / 100.0;
        assert!((mean - 0.871_142).abs() < 0.005);
    }

    #[test]
    fn flat_fringes_give_one_eta_peak() {
        let mut probe = ProbeParams::experiment();
        probe.contrast = 0.0;
        let samples = simulate_calibration_run(&cal_config(probe, 2), 200, 5000).unwrap();
        for i in PhaseIndex::ALL {
            for b in samples.batches(i) {
                assert!((b.eta0 - 0.4535).abs() < 4.0 * libm::sqrt(0.25 / 5000.0));
            }
        }
    }

    #[test]
    fn calibration_histogram_has_five_peaks() {
        let probe = ProbeParams::experiment();
        let samples = simulate_calibration_run(&cal_config(probe, 3), 20_000, 400).unwrap();
        for i in PhaseIndex::ALL {
            let mut hist = [0usize; 401];
            for b in samples.batches(i) {
                hist[b.zeros() as usize] += 1;
            }
            // Each of the five fringe values must collect batches within
            // ±3 binomial standard deviations.
            for n in 0..=CAL_N_MAX {
                let p = probe.likelihood(crate::Outcome::Zero, i, n);
                let centre = p * 400.0;
                let half = 3.0 * libm::sqrt(400.0 * p * (1.0 - p));
                let lo = (centre - half).max(0.0) as usize;
                let hi = ((centre + half) as usize).min(400);
                let around: usize = hist[lo..=hi].iter().sum();
                assert!(around > 0, "phase {i} peak n = {n} is empty");
            }
        }
    }

    #[test]
    fn exact_peaks_recover_parameters() {
        let truth = ProbeParams::experiment();
        let peaks: [[f64; 5]; 4] = core::array::from_fn(|i| {
            core::array::from_fn(|n| truth.likelihood(crate::Outcome::Zero, PhaseIndex::ALL[i], n))
        });
        let (fit, residual) = fit_peak_positions(&peaks).unwrap();
        assert!(residual < 1e-20, "residual {residual}");
        assert!((fit.offset - truth.offset).abs() < 1e-7);
        assert!((fit.contrast - truth.contrast).abs() < 1e-7);
        assert!((fit.phase_per_photon - truth.phase_per_photon).abs() < 1e-7);
        for i in 0..4 {
            assert!(angle_diff(fit.phases[i], truth.phases[i]) < 1e-7);
        }
    }

    #[test]
    fn missing_phase_is_rejected() {
        let mut samples = CalibrationSamples::default();
        samples.push(PhaseIndex::A, CalibrationBatch { eta0: 0.5, batch_size: 10 });
        assert_eq!(fit_probe_params(&samples, 1.2).unwrap_err(), Error::MissingPhase('b'));
    }

    #[test]
    fn spd_inverse() {
        let m = [4.0, 2.0, 2.0, 3.0];
        let inv = invert_spd(&m).unwrap();
        let det = 8.0;
        let expect = [3.0 / det, -2.0 / det, -2.0 / det, 4.0 / det];
        for (a, b) in inv.iter().zip(expect) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(invert_spd(&[1.0, 2.0, 2.0, 1.0]).is_none());
    }
}

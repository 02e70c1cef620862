//! Ensemble statistics shared by `analyze` and the acceptance suite.

use serde::Serialize;

use qnd_core::analysis::{
    dwell_statistics, ensemble_histogram, extract_staircase, fit_poisson_peaks, is_integer_estimate, jump_latency,
    median, staircase_dwells, truth_dwells, Dwell, DwellStat, LatencyReport, MeanHistogram, PoissonPeakFit, Staircase,
};
use qnd_core::decoder::{batch_posterior, sliding_estimates, DetectionRecord, LogAccumulator};
use qnd_core::sim::TruthEvent;
use qnd_core::{CavityParams, PhotonDistribution, ProbeParams};

use crate::config::RunConfig;
use crate::error::Result;

/// Collapse measurement of one sequence: the posterior over its first
/// `window` atoms and whether it reached the convergence probability early.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CollapseOutcome {
    pub mean_n: f64,
    pub max_prob: f64,
    /// First atom count at which the peak posterior reached the convergence
    /// probability, if it did within the first `window` atoms.
    pub first_confident: Option<usize>,
    /// Peak posterior after exactly `convergence_atoms` atoms.
    pub max_prob_at_check: f64,
}

/// `None` when the sequence holds fewer than `window` atoms.
pub fn collapse_outcome(
    records: &[DetectionRecord],
    probe: &ProbeParams,
    prior: &PhotonDistribution,
    window: usize,
    convergence_atoms: usize,
    convergence_probability: f64,
) -> Result<Option<CollapseOutcome>> {
    if records.len() < window {
        return Ok(None);
    }
    let mut acc = LogAccumulator::new(prior.n_max());
    let mut first_confident = None;
    let mut max_prob_at_check = f64::NAN;
    let track = convergence_atoms.min(window);
    for (idx, r) in records[..track].iter().enumerate() {
        acc.absorb(probe, r.outcome, r.phase);
        let p = acc.posterior(prior)?.max_prob();
        if first_confident.is_none() && p >= convergence_probability {
            first_confident = Some(idx + 1);
        }
        if idx + 1 == convergence_atoms {
            max_prob_at_check = p;
        }
    }
    let (post, _) = batch_posterior(prior, probe, &records[..window])?;
    Ok(Some(CollapseOutcome {
        mean_n: post.mean(),
        max_prob: post.max_prob(),
        first_confident,
        max_prob_at_check,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CollapseSummary {
    pub sequences: usize,
    /// Sequences too short for a full window.
    pub skipped: usize,
    pub histogram: MeanHistogram,
    pub fit: PoissonPeakFit,
    /// Sequences whose final mean lies in an integer-centred bin.
    pub converged: usize,
    /// Fraction of converged sequences whose peak posterior reached the
    /// convergence probability within `convergence_atoms` atoms.
    pub confident_by_check: f64,
    /// Fraction of converged sequences above the convergence probability at
    /// exactly `convergence_atoms` atoms.
    pub confident_at_check: f64,
    /// Mass of the `n = 0` peak minus the fitted Poisson prediction there.
    pub zero_excess: f64,
    /// Binomial standard error of the `n = 0` peak mass.
    pub zero_excess_se: f64,
    /// Fitted Poisson mass at `n = n_max + 1`, which aliases onto `n = 0`.
    pub alias_prediction: f64,
}

pub fn summarize_collapse(
    outcomes: &[Option<CollapseOutcome>],
    bin_width: f64,
    n_max: usize,
    convergence_atoms: usize,
    convergence_probability: f64,
) -> Result<CollapseSummary> {
    let done: Vec<&CollapseOutcome> = outcomes.iter().flatten().collect();
    let means: Vec<f64> = done.iter().map(|o| o.mean_n).collect();
    let histogram = ensemble_histogram(&means, bin_width, n_max)?;
    let fit = fit_poisson_peaks(&histogram)?;
    let converged: Vec<&&CollapseOutcome> = done.iter().filter(|o| is_integer_estimate(o.mean_n, bin_width)).collect();
    let fraction = |hit: &dyn Fn(&CollapseOutcome) -> bool| {
        if converged.is_empty() {
            f64::NAN
        } else {
            converged.iter().filter(|o| hit(o)).count() as f64 / converged.len() as f64
        }
    };
    let confident_by_check = fraction(&|o| o.first_confident.is_some_and(|k| k <= convergence_atoms));
    let confident_at_check = fraction(&|o| o.max_prob_at_check >= convergence_probability);
    let m0 = fit.peak_masses[0];
    let total = histogram.total_count as f64;
    Ok(CollapseSummary {
        sequences: outcomes.len(),
        skipped: outcomes.len() - done.len(),
        zero_excess: m0 - fit.predicted_mass(0),
        zero_excess_se: (m0 * (1.0 - m0) / total).sqrt(),
        alias_prediction: fit.predicted_mass(n_max + 1),
        converged: converged.len(),
        confident_by_check,
        confident_at_check,
        histogram,
        fit,
    })
}

/// Collapse statistics for a set of sequences under a run configuration.
pub fn collapse_from_config(sequences: &[Vec<DetectionRecord>], cfg: &RunConfig) -> Result<CollapseSummary> {
    let prior = PhotonDistribution::flat(cfg.decoder.n_max);
    let a = &cfg.analysis;
    let outcomes = crate::ensemble::par_map(sequences, |recs| {
        collapse_outcome(
            recs,
            &cfg.probe,
            &prior,
            cfg.decoder.window,
            a.convergence_atoms,
            a.convergence_probability,
        )
    })?;
    summarize_collapse(
        &outcomes,
        a.bin_width,
        cfg.decoder.n_max,
        a.convergence_atoms,
        a.convergence_probability,
    )
}

/// Jump dynamics of one sequence: truth dwells, the decoded staircase and
/// its latencies.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceDynamics {
    pub truth_dwells: Vec<Dwell>,
    pub staircase: Staircase,
    pub latency: LatencyReport,
}

pub fn sequence_dynamics(
    records: &[DetectionRecord],
    truth: &[TruthEvent],
    probe: &ProbeParams,
    prior: &PhotonDistribution,
    window: usize,
    stability: usize,
) -> Result<SequenceDynamics> {
    let trace = sliding_estimates(records, probe, window, prior)?;
    let staircase = extract_staircase(&trace, stability)?;
    Ok(SequenceDynamics {
        truth_dwells: truth_dwells(truth),
        latency: jump_latency(&staircase, truth),
        staircase,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DynamicsSummary {
    pub truth_dwells: Vec<DwellStat>,
    pub staircase_dwells: Vec<DwellStat>,
    pub matched_jumps: usize,
    pub unmatched_jumps: usize,
    pub median_latency: Option<f64>,
}

pub fn summarize_dynamics(per_sequence: &[SequenceDynamics], cavity: &CavityParams) -> DynamicsSummary {
    let truth: Vec<Dwell> = per_sequence.iter().flat_map(|d| d.truth_dwells.iter().copied()).collect();
    let stairs: Vec<Dwell> = per_sequence.iter().flat_map(|d| staircase_dwells(&d.staircase)).collect();
    let latencies: Vec<f64> = per_sequence.iter().flat_map(|d| d.latency.latencies()).collect();
    DynamicsSummary {
        truth_dwells: dwell_statistics(&truth, cavity),
        staircase_dwells: dwell_statistics(&stairs, cavity),
        matched_jumps: latencies.len(),
        unmatched_jumps: per_sequence.iter().map(|d| d.latency.unmatched.len()).sum(),
        median_latency: median(&latencies),
    }
}

/// One statistical assertion of `analyze --check`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub target: String,
    /// `None` when the data cannot support the check.
    pub passed: Option<bool>,
}

impl Check {
    fn new(name: impl Into<String>, value: f64, target: String, passed: Option<bool>) -> Self {
        Self {
            name: name.into(),
            value,
            target,
            passed,
        }
    }

    pub fn status(&self) -> &'static str {
        match self.passed {
            Some(true) => "PASS",
            Some(false) => "FAIL",
            None => "SKIP",
        }
    }
}

/// Mean-photon-number tolerance for the Poisson fit.
pub const LAMBDA_TOLERANCE: f64 = 0.10;
/// Reference background fraction and its tolerance.
pub const BACKGROUND_TARGET: (f64, f64) = (0.23, 0.08);
/// Required fraction of converged sequences that are confident early.
pub const CONFIDENT_FRACTION: f64 = 0.8;
/// Accepted range of the median jump-detection latency (s).
pub const LATENCY_RANGE: (f64, f64) = (0.005, 0.02);
/// Levels whose truth dwell times are checked.
pub const DWELL_LEVELS: [u32; 3] = [4, 5, 7];

/// Checks against model predictions for the configured operating point.
/// The Poisson mean is compared with the decayed mean at the middle of the
/// measurement window, dwell means with the Fock lifetimes and the `n = 0`
/// excess with the fitted alias mass.
pub fn run_checks(cfg: &RunConfig, collapse: Option<&CollapseSummary>, dynamics: Option<&DynamicsSummary>) -> Vec<Check> {
    let mut checks = Vec::new();
    if let Some(c) = collapse {
        let enough = c.sequences > c.skipped;
        let window_time = cfg.decoder.window as f64 * cfg.beam.mean_detection_interval();
        let expected = qnd_core::field::decayed_mean(cfg.n0, window_time / 2.0, &cfg.cavity);
        let lambda = c.fit.lambda_hat;
        checks.push(Check::new(
            "poisson_mean",
            lambda,
            format!("{expected:.4} ± {LAMBDA_TOLERANCE}"),
            enough.then(|| (lambda - expected).abs() <= LAMBDA_TOLERANCE),
        ));
        let bg = c.fit.background_fraction;
        let (bg_target, bg_tol) = BACKGROUND_TARGET;
        checks.push(Check::new(
            "background_fraction",
            bg,
            format!("{bg_target} ± {bg_tol}"),
            enough.then(|| (bg - bg_target).abs() <= bg_tol),
        ));
        let sigma = (CONFIDENT_FRACTION * (1.0 - CONFIDENT_FRACTION) / c.converged as f64).sqrt();
        let floor = CONFIDENT_FRACTION - 3.0 * sigma;
        checks.push(Check::new(
            "confident_by_check_atoms",
            c.confident_by_check,
            format!(">= {floor:.4}"),
            (c.converged > 0).then_some(c.confident_by_check >= floor),
        ));
        checks.push(Check::new(
            "zero_excess",
            c.zero_excess,
            format!("{:.4} ± {:.4}", c.alias_prediction, 3.0 * c.zero_excess_se),
            enough.then(|| (c.zero_excess - c.alias_prediction).abs() <= 3.0 * c.zero_excess_se),
        ));
    }
    if let Some(d) = dynamics {
        for level in DWELL_LEVELS {
            let stat = d.truth_dwells.iter().find(|s| s.level == level);
            let (value, target, passed) = match stat {
                Some(s) if s.std_error.is_finite() => (
                    s.mean,
                    format!("{:.5} ± {:.5}", s.expected, 3.0 * s.std_error),
                    Some((s.mean - s.expected).abs() <= 3.0 * s.std_error),
                ),
                _ => (f64::NAN, "at least two dwells".to_owned(), None),
            };
            checks.push(Check::new(format!("dwell_n{level}"), value, target, passed));
        }
        let (lo, hi) = LATENCY_RANGE;
        checks.push(Check::new(
            "median_latency",
            d.median_latency.unwrap_or(f64::NAN),
            format!("in [{lo}, {hi}]"),
            d.median_latency.map(|m| (lo..=hi).contains(&m)),
        ));
    }
    checks
}

//! Parallel execution over sequences and calibration start points.
//!
//! Work is split with rayon; results are always collected in sequence-id (or
//! start-point) order so a run is reproducible regardless of thread count.

use rayon::prelude::*;

use qnd_core::calibration::{best_of, CalibrationFit, CalibrationProblem, CalibrationSamples};
use qnd_core::optim::Minimum;
use qnd_core::sim::{simulate_sequence, SimConfig, Trajectory};

use crate::error::Result;

/// Simulates sequences `0..sequences` under `config.seed`.
pub fn simulate_ensemble(config: &SimConfig, sequences: usize) -> Result<Vec<Trajectory>> {
    config.validate()?;
    (0..sequences as u64)
        .into_par_iter()
        .map(|seq| simulate_sequence(config, seq).map_err(Into::into))
        .collect()
}

/// Simulates and reduces each sequence without keeping the trajectories.
pub fn map_ensemble<T, F>(config: &SimConfig, sequences: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(Trajectory) -> Result<T> + Sync,
{
    config.validate()?;
    (0..sequences as u64)
        .into_par_iter()
        .map(|seq| f(simulate_sequence(config, seq)?))
        .collect()
}

/// Applies `f` to every item in parallel, keeping input order.
pub fn par_map<I, T, F>(items: &[I], f: F) -> Result<Vec<T>>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> Result<T> + Sync + Send,
{
    items.par_iter().map(&f).collect()
}

/// Calibration fit with the simplex refinements of all start points run
/// concurrently.
pub fn fit_calibration(samples: &CalibrationSamples, n0_cal: f64) -> Result<CalibrationFit> {
    let problem = CalibrationProblem::new(samples, n0_cal)?;
    let minima: Vec<Minimum> = problem.starts().par_iter().map(|s| problem.refine(s)).collect();
    let evaluations = minima.iter().map(|m| m.evaluations).sum();
    let best = best_of(minima).ok_or(qnd_core::Error::Empty("no start points"))?;
    Ok(problem.finish(best, evaluations)?)
}

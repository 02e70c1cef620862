use std::f64::consts::PI;

use qnd_core::calibration::{fit_probe_params, simulate_calibration_run, CalibrationProblem, CAL_N0};
use qnd_core::sim::{OutcomeMode, SimConfig};
use qnd_core::{Error, ProbeParams};

fn cal_config(probe: ProbeParams, seed: u64) -> SimConfig {
    SimConfig {
        n0: CAL_N0,
        probe,
        outcome_mode: OutcomeMode::Offset,
        seed,
        ..SimConfig::experiment()
    }
}

fn gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d)
}

// Seed 0 has a deep secondary basin for φ_a near 0.93π that a fixed start
// grid falls into.
#[test]
fn fit_escapes_secondary_phase_basin() {
    let truth = ProbeParams::experiment();
    let samples = simulate_calibration_run(&cal_config(truth, 0), 10_000, 50).unwrap();
    let fit = fit_probe_params(&samples, CAL_N0).unwrap();
    let problem = CalibrationProblem::new(&samples, CAL_N0).unwrap();
    let at_truth = problem.objective(&[
        truth.offset,
        truth.contrast,
        truth.phase_per_photon,
        truth.phases[0],
        truth.phases[1],
        truth.phases[2],
        truth.phases[3],
    ]);
    assert!(fit.objective <= at_truth, "{} > {at_truth}", fit.objective);
    for i in 0..4 {
        assert!(gap(fit.params.phases[i], truth.phases[i]) < 0.02 * PI, "phase {i}");
        assert!(fit.std_errors[3 + i] < 0.05);
    }
}

#[test]
fn vanishing_contrast_is_degenerate() {
    let mut flat = ProbeParams::experiment();
    flat.contrast = 0.0;
    let samples = simulate_calibration_run(&cal_config(flat, 4), 4_000, 50).unwrap();
    match fit_probe_params(&samples, CAL_N0) {
        Err(Error::Degenerate(_)) => {}
        Ok(fit) => panic!("expected degenerate, got {fit:?}"),
        Err(e) => panic!("{e}"),
    }
}

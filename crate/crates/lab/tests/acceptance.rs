//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits with a failure status if any criterion fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::Rng;

use qnd_core::adaptive::{adaptive_measure, stage_count};
use qnd_core::calibration::simulate_calibration_run;
use qnd_core::decoder::{batch_posterior, bayes_update, DetectionRecord};
use qnd_core::probe::{effective_interaction_time, phase_per_photon, PhysicalParams};
use qnd_core::sim::{sample_outcome, sample_photon_number, sequence_rng, OutcomeMode};
use qnd_core::{Outcome, PhaseIndex, PhotonDistribution, ProbeParams};
use qnd_lab::ensemble::{fit_calibration, map_ensemble};
use qnd_lab::stats::{collapse_outcome, sequence_dynamics, summarize_collapse, summarize_dynamics, CollapseSummary};
use qnd_lab::RunConfig;

struct Verdict {
    id: &'static str,
    title: &'static str,
    passed: bool,
    detail: String,
}

fn verdict(id: &'static str, title: &'static str, passed: bool, detail: String) -> Verdict {
    Verdict {
        id,
        title,
        passed,
        detail,
    }
}

fn within(value: f64, target: f64, tol: f64) -> bool {
    (value - target).abs() <= tol
}

/// Difference of two angles folded into `[0, π]`.
fn angle_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d)
}

/// 2000 sequences of 110 atoms at the reference operating point.
fn collapse_ensemble() -> (CollapseSummary, Duration) {
    let cfg = RunConfig::default();
    let prior = PhotonDistribution::flat(cfg.decoder.n_max);
    let a = &cfg.analysis;
    let start = Instant::now();
    let outcomes = map_ensemble(&cfg.sim_config(), 2000, |t| {
        collapse_outcome(
            &t.records,
            &cfg.probe,
            &prior,
            110,
            a.convergence_atoms,
            a.convergence_probability,
        )
    })
    .unwrap();
    let summary =
        summarize_collapse(&outcomes, 0.2, cfg.decoder.n_max, a.convergence_atoms, a.convergence_probability).unwrap();
    (summary, start.elapsed())
}

fn criterion_1(c: &CollapseSummary, elapsed: Duration) -> Verdict {
    let lambda = c.fit.lambda_hat;
    let bg = c.fit.background_fraction;
    let passed = within(lambda, 3.46, 0.10) && within(bg, 0.23, 0.08) && elapsed < Duration::from_secs(120);
    verdict(
        "1",
        "collapse and reconstruction",
        passed,
        format!(
            "lambda_hat = {lambda:.4} (3.46 ± 0.10), background = {bg:.4} (0.23 ± 0.08), runtime {:.1} s (< 120 s)",
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_2(c: &CollapseSummary) -> Verdict {
    let sigma = (0.8 * 0.2 / c.converged as f64).sqrt();
    let floor = 0.8 - 3.0 * sigma;
    verdict(
        "2",
        "convergence speed",
        c.confident_by_check >= floor,
        format!(
            "{:.4} of {} converged sequences reach max posterior >= 0.8 by 60 atoms (>= {floor:.4}); {:.4} hold it at exactly 60",
            c.confident_by_check, c.converged, c.confident_at_check
        ),
    )
}

fn criterion_5(c: &CollapseSummary) -> Verdict {
    let tol = 3.0 * c.zero_excess_se;
    verdict(
        "5",
        "aliasing excess at n = 0",
        within(c.zero_excess, 0.012, tol),
        format!(
            "excess = {:.4} (0.012 ± {tol:.4}); fitted alias mass {:.4}",
            c.zero_excess, c.alias_prediction
        ),
    )
}

/// 2000 sequences of 0.7 s: truth dwells and decoded jump latencies.
fn dynamics_criteria() -> (Verdict, Verdict) {
    let cfg = RunConfig {
        atoms_per_sequence: 0,
        duration: 0.7,
        ..RunConfig::default()
    };
    let prior = PhotonDistribution::flat(cfg.decoder.n_max);
    let per_seq = map_ensemble(&cfg.sim_config(), 2000, |t| {
        sequence_dynamics(&t.records, &t.truth, &cfg.probe, &prior, 110, cfg.analysis.stability)
    })
    .unwrap();
    let summary = summarize_dynamics(&per_seq, &cfg.cavity);

    let mut passed = true;
    let mut parts = Vec::new();
    for (level, target) in [(4u32, 0.0292), (5, 0.0234), (7, 0.0168)] {
        match summary.truth_dwells.iter().find(|s| s.level == level) {
            Some(s) if s.std_error.is_finite() => {
                let ok = within(s.mean, target, 3.0 * s.std_error);
                passed &= ok;
                parts.push(format!(
                    "n={level}: {:.5} ± {:.5} vs {target} over {} dwells",
                    s.mean, 3.0 * s.std_error, s.count
                ));
            }
            _ => {
                passed = false;
                parts.push(format!("n={level}: too few dwells"));
            }
        }
    }
    let dwell = verdict("3", "Fock lifetimes", passed, parts.join("; "));

    let latency = match summary.median_latency {
        Some(m) => verdict(
            "4",
            "jump latency",
            (0.005..=0.02).contains(&m),
            format!(
                "median = {m:.4} s over {} matched jumps ({} unmatched), range [0.005, 0.02]",
                summary.matched_jumps, summary.unmatched_jumps
            ),
        ),
        None => verdict("4", "jump latency", false, "no decoded jumps".into()),
    };
    (dwell, latency)
}

fn criterion_6() -> Verdict {
    let mut zeros_exact = true;
    for p in 0..8u32 {
        let mut probe = ProbeParams::ideal();
        probe.phases[0] = wrap_angle(f64::from(p) * PI / 4.0);
        let rec = DetectionRecord {
            seq_id: 0,
            k: 1,
            t: 0.0,
            phase: PhaseIndex::A,
            outcome: Outcome::One,
            truth_n: None,
        };
        let post = bayes_update(&PhotonDistribution::flat(15), &probe, &rec).unwrap();
        for n in 0..16u32 {
            let p_n = post.get(n as usize);
            if n % 8 == p {
                zeros_exact &= p_n == 0.0;
            } else if p_n <= 0.0 {
                zeros_exact = false;
            }
        }
    }
    verdict(
        "6",
        "decimation exactness",
        zeros_exact,
        "j = 1 at phase p·π/4 zeroes exactly n ≡ p (mod 8), p = 0..7, over n = 0..15".into(),
    )
}

fn wrap_angle(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y == -PI {
        PI
    } else {
        y
    }
}

/// Posterior from the plain product of fringe factors.
fn direct_product(probe: &ProbeParams, recs: &[DetectionRecord]) -> Vec<f64> {
    let mut w = [1.0 / 8.0; 8];
    for r in recs {
        let phase = probe.phases[r.phase.index()];
        let shift = if r.outcome == Outcome::One { PI } else { 0.0 };
        for (n, x) in w.iter_mut().enumerate() {
            *x *= (probe.offset + probe.contrast * (n as f64 * probe.phase_per_photon - phase + shift).cos()) / 2.0;
        }
    }
    let z: f64 = w.iter().sum();
    w.iter().map(|x| x / z).collect()
}

fn criterion_7() -> Verdict {
    let probe = ProbeParams::experiment();
    let mut rng = sequence_rng(2024, 7);
    let mut worst = 0.0f64;
    for stream in 0..100u64 {
        let len = rng.random_range(1..=200usize);
        let recs: Vec<DetectionRecord> = (0..len)
            .map(|k| DetectionRecord {
                seq_id: stream,
                k: k as u32 + 1,
                t: k as f64 * 1e-4,
                phase: PhaseIndex::ALL[rng.random_range(0..4)],
                outcome: if rng.random::<bool>() { Outcome::One } else { Outcome::Zero },
                truth_n: None,
            })
            .collect();
        let (post, _) = batch_posterior(&PhotonDistribution::flat(7), &probe, &recs).unwrap();
        let oracle = direct_product(&probe, &recs);
        for (a, b) in post.probs().iter().zip(&oracle) {
            worst = worst.max((a - b).abs());
        }
    }
    verdict(
        "7",
        "oracle equivalence",
        worst <= 1e-10,
        format!("max |log-domain − direct product| = {worst:.3e} over 100 streams (<= 1e-10)"),
    )
}

fn criterion_8() -> Verdict {
    let probe = ProbeParams::ideal();
    let stages = stage_count(7);
    let exact = (0..=7)
        .filter(|&n| {
            let r = adaptive_measure(n, 7, &probe).unwrap();
            r.estimate == n && r.atoms_used == 3
        })
        .count();
    verdict(
        "8",
        "adaptive bound",
        stages == 3 && exact == 8,
        format!("{stages} stages; {exact} of 8 photon numbers recovered exactly with 3 atoms"),
    )
}

fn criterion_9() -> Verdict {
    let cfg = RunConfig::default();
    let truth = cfg.probe;
    let samples = simulate_calibration_run(&cfg.calibration_sim_config(), 10_000, 50).unwrap();
    let fit = fit_calibration(&samples, cfg.calibration.n0).unwrap();
    let p = fit.params;
    let da = (p.offset - truth.offset).abs();
    let db = (p.contrast - truth.contrast).abs();
    let dphi = angle_gap(p.phase_per_photon, truth.phase_per_photon) / PI;
    let dphases: Vec<f64> = (0..4).map(|i| angle_gap(p.phases[i], truth.phases[i]) / PI).collect();
    let worst_phase = dphases.iter().copied().fold(0.0, f64::max);
    verdict(
        "9",
        "calibration round trip",
        da <= 0.02 && db <= 0.02 && dphi <= 0.02 && worst_phase <= 0.02,
        format!(
            "|ΔA| = {da:.4}, |ΔB| = {db:.4} (<= 0.02); |ΔΦ|/π = {dphi:.4}, max |Δφ_i|/π = {worst_phase:.4} (<= 0.02)"
        ),
    )
}

fn criterion_10() -> Verdict {
    let phys = PhysicalParams::experiment();
    let shift = phase_per_photon(&phys, 3e-5).unwrap();
    let t_eff = effective_interaction_time(&phys);
    let shift_ok = within(shift, PI / 4.0, 1e-12);
    let time_ok = within(t_eff, 3.01e-5, 1e-8);
    verdict(
        "10",
        "physical formulas",
        shift_ok && time_ok,
        format!(
            "phase per photon − π/4 = {:.2e} (<= 1e-12): {}; effective time = {t_eff:.6e} s, |Δ| = {:.3e} s (<= 1e-8): {}",
            shift - PI / 4.0,
            if shift_ok { "ok" } else { "off" },
            (t_eff - 3.01e-5).abs(),
            if time_ok { "ok" } else { "off" }
        ),
    )
}

fn criterion_11() -> Verdict {
    let probe = ProbeParams::experiment();
    let weights: Vec<f64> = (0..8)
        .scan(1.0f64, |w, n| {
            if n > 0 {
                *w *= 3.82 / f64::from(n);
            }
            Some(*w)
        })
        .collect();
    let prior = PhotonDistribution::from_weights(weights).unwrap();
    let samples = 100_000;
    let mut rng = sequence_rng(11, 0);
    let mut sum = [0.0f64; 8];
    let mut sum_sq = [0.0f64; 8];
    for s in 0..samples {
        let n = sample_photon_number(&prior, &mut rng);
        let phase = PhaseIndex::ALL[s % 4];
        let outcome = sample_outcome(&probe, phase, n, OutcomeMode::Matched, &mut rng).unwrap();
        let rec = DetectionRecord {
            seq_id: 0,
            k: 1,
            t: 0.0,
            phase,
            outcome,
            truth_n: Some(n),
        };
        let post = bayes_update(&prior, &probe, &rec).unwrap();
        for (k, p) in post.probs().iter().enumerate() {
            sum[k] += p;
            sum_sq[k] += p * p;
        }
    }
    let m = samples as f64;
    let mut worst_z = 0.0f64;
    for k in 0..8 {
        let mean = sum[k] / m;
        let var = (sum_sq[k] / m - mean * mean).max(0.0) * m / (m - 1.0);
        let se = (var / m).sqrt();
        let z = if se > 0.0 { (mean - prior.get(k)).abs() / se } else { 0.0 };
        worst_z = worst_z.max(z);
    }
    verdict(
        "11",
        "martingale property",
        worst_z <= 3.0,
        format!("largest |mean posterior − prior| = {worst_z:.2} standard errors over {samples} samples (<= 3)"),
    )
}

fn main() -> ExitCode {
    let (collapse, elapsed) = collapse_ensemble();
    let (dwell, latency) = dynamics_criteria();
    let verdicts = vec![
        criterion_1(&collapse, elapsed),
        criterion_2(&collapse),
        dwell,
        latency,
        criterion_5(&collapse),
        criterion_6(),
        criterion_7(),
        criterion_8(),
        criterion_9(),
        criterion_10(),
        criterion_11(),
    ];
    let mut failed = 0;
    for v in &verdicts {
        println!(
            "{} criterion {:>2} ({}): {}",
            if v.passed { "PASS" } else { "FAIL" },
            v.id,
            v.title,
            v.detail
        );
        failed += usize::from(!v.passed);
    }
    println!("acceptance: {} passed, {failed} failed", verdicts.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

//! The `simulate → decode/profile → analyze` pipeline plus the calibration
//! and adaptive side runs.
//!
//! Every command reads and writes inside `output.dir`. Each output file is
//! written to a temporary file in the same directory and renamed into place,
//! so it is either complete or absent. Every file starts with a provenance
//! line (or, for JSON, fields) carrying the config hash and seed.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use qnd_core::adaptive::{adaptive_measure, adaptive_phase_schedule, stage_count};
use qnd_core::calibration::{simulate_calibration_run, CalibrationFit, CalibrationSamples};
use qnd_core::decoder::{
    convergence_status, product_profile, sliding_estimates, Convergence, DetectionRecord, LogAccumulator,
};
use qnd_core::sim::{TruthEvent, Trajectory};
use qnd_core::{PhaseIndex, PhotonDistribution, ProbeParams};

use crate::config::{RecordFormat, RunConfig};
use crate::ensemble::{fit_calibration, map_ensemble, par_map};
use crate::error::{LabError, Result};
use crate::records::{group_by_sequence, group_truth, read_records, read_truth, write_records, write_truth, Header};
use crate::stats::{
    collapse_from_config, run_checks, sequence_dynamics, summarize_dynamics, Check, CollapseSummary, DynamicsSummary,
    SequenceDynamics,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Decode,
    Profile,
    Calibrate,
    Analyze,
    Adaptive,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Simulate => "simulate",
            Self::Decode => "decode",
            Self::Profile => "profile",
            Self::Calibrate => "calibrate",
            Self::Analyze => "analyze",
            Self::Adaptive => "adaptive",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub command: Command,
    pub files: Vec<PathBuf>,
    pub checks: Vec<Check>,
    /// Human-readable result lines.
    pub summary: Vec<String>,
}

impl RunReport {
    pub fn failed_checks(&self) -> usize {
        self.checks.iter().filter(|c| c.passed == Some(false)).count()
    }

    /// `Err(CheckFailed)` when `check` is set and any check failed.
    pub fn verdict(&self, check: bool) -> Result<()> {
        match self.failed_checks() {
            n if check && n > 0 => Err(LabError::CheckFailed(n)),
            _ => Ok(()),
        }
    }
}

pub const RECORDS_STEM: &str = "records";
pub const TRUTH_STEM: &str = "truth";

/// Runs one command. Statistical checks are always evaluated by `analyze`;
/// use [`RunReport::verdict`] to turn failures into an error.
pub fn run_pipeline(cfg: &RunConfig, command: Command) -> Result<RunReport> {
    cfg.validate()?;
    let dir = &cfg.output.dir;
    std::fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
    let mut out = Outputs::new(cfg, dir);
    let mut report = RunReport {
        command,
        files: Vec::new(),
        checks: Vec::new(),
        summary: Vec::new(),
    };
    match command {
        Command::Simulate => simulate(cfg, &mut out, &mut report)?,
        Command::Decode => decode(cfg, &mut out, &mut report)?,
        Command::Profile => profile(cfg, &mut out, &mut report)?,
        Command::Calibrate => calibrate(cfg, &mut out, &mut report)?,
        Command::Analyze => analyze(cfg, &mut out, &mut report)?,
        Command::Adaptive => adaptive(cfg, &mut out, &mut report)?,
    }
    report.files = out.files;
    Ok(report)
}

struct Outputs<'a> {
    dir: &'a Path,
    hash: String,
    seed: u64,
    files: Vec<PathBuf>,
}

impl<'a> Outputs<'a> {
    fn new(cfg: &RunConfig, dir: &'a Path) -> Self {
        Self {
            dir,
            hash: cfg.hash(),
            seed: cfg.seed,
            files: Vec::new(),
        }
    }

    fn header(&self, kind: &str) -> Header {
        Header::new(kind, &self.hash, self.seed)
    }

    fn write(&mut self, name: &str, body: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
        let path = self.dir.join(name);
        let tmp = tempfile::NamedTempFile::new_in(self.dir).map_err(|e| LabError::io(self.dir, e))?;
        let mut w = BufWriter::new(tmp);
        body(&mut w)?;
        let tmp = w.into_inner().map_err(|e| LabError::io(&path, e.into_error()))?;
        tmp.persist(&path).map_err(|e| LabError::io(&path, e.error))?;
        self.files.push(path);
        Ok(())
    }

    /// CSV table preceded by the provenance comment.
    fn table<I>(&mut self, name: &str, kind: &str, columns: &[&str], rows: I) -> Result<()>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let header = self.header(kind);
        self.write(name, |w| {
            writeln!(w, "{}", header.line()).map_err(write_err)?;
            let mut csv = csv::Writer::from_writer(w);
            csv.write_record(columns).map_err(write_err)?;
            for row in rows {
                csv.write_record(&row).map_err(write_err)?;
            }
            csv.flush().map_err(write_err)
        })
    }

    fn json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value).map_err(write_err)?;
            writeln!(w).map_err(write_err)
        })
    }
}

fn write_err(e: impl fmt::Display) -> LabError {
    LabError::Data(format!("write failed: {e}"))
}

fn file_name(stem: &str, format: RecordFormat) -> String {
    format!("{stem}.{}", format.extension())
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| LabError::io(path, e))
}

struct RecordInput {
    header: Option<Header>,
    sequences: Vec<(u64, Vec<DetectionRecord>)>,
}

fn load_records(cfg: &RunConfig) -> Result<RecordInput> {
    let format = cfg.output.record_format;
    let path = cfg.output.dir.join(file_name(RECORDS_STEM, format));
    let parsed = read_records(open(&path)?, format).map_err(|e| locate(&path, e))?;
    Ok(RecordInput {
        header: parsed.header,
        sequences: group_by_sequence(parsed.rows),
    })
}

fn locate(path: &Path, e: LabError) -> LabError {
    match e {
        LabError::Record { .. } | LabError::Data(_) => LabError::Data(format!("{}: {e}", path.display())),
        other => other,
    }
}

fn simulate(cfg: &RunConfig, out: &mut Outputs<'_>, report: &mut RunReport) -> Result<()> {
    let trajectories: Vec<Trajectory> = map_ensemble(&cfg.sim_config(), cfg.sequences, Ok)?;
    let format = cfg.output.record_format;
    let atoms: usize = trajectories.iter().map(|t| t.records.len()).sum();
    let header = out.header("records");
    out.write(&file_name(RECORDS_STEM, format), |w| {
        write_records(w, &header, trajectories.iter().flat_map(|t| &t.records), format)
    })?;
    let header = out.header("truth");
    out.write(&file_name(TRUTH_STEM, format), |w| {
        write_truth(
            w,
            &header,
            trajectories.iter().flat_map(|t| t.truth.iter().map(|e| (t.seq_id, e))),
            format,
        )
    })?;
    report.summary.push(format!(
        "simulated {} sequences, {atoms} detected atoms",
        trajectories.len()
    ));
    Ok(())
}

struct Decoded {
    seq: u64,
    /// `(k, t, posterior)` after each of the first `window` atoms.
    evolution: Vec<(u32, f64, PhotonDistribution)>,
    trace: qnd_core::decoder::EstimateTrace,
    atoms: usize,
    collapse: PhotonDistribution,
}

fn decode_sequence(seq: u64, recs: &[DetectionRecord], cfg: &RunConfig) -> Result<Decoded> {
    let prior = PhotonDistribution::flat(cfg.decoder.n_max);
    let n = recs.len().min(cfg.decoder.window);
    let mut acc = LogAccumulator::new(cfg.decoder.n_max);
    let mut evolution = Vec::with_capacity(n);
    for r in &recs[..n] {
        acc.absorb(&cfg.probe, r.outcome, r.phase);
        evolution.push((r.k, r.t, acc.posterior(&prior)?));
    }
    let collapse = evolution.last().map_or_else(|| prior.clone(), |e| e.2.clone());
    let trace = sliding_estimates(recs, &cfg.probe, cfg.decoder.window, &prior)?;
    Ok(Decoded {
        seq,
        evolution,
        trace,
        atoms: n,
        collapse,
    })
}

fn decode(cfg: &RunConfig, out: &mut Outputs<'_>, report: &mut RunReport) -> Result<()> {
    let input = load_records(cfg)?;
    let decoded = par_map(&input.sequences, |(seq, recs)| decode_sequence(*seq, recs, cfg))?;
    let n_max = cfg.decoder.n_max;

    let mut columns = vec!["seq".to_owned(), "k".to_owned(), "t".to_owned()];
    columns.extend((0..=n_max).map(|n| format!("p{n}")));
    let columns: Vec<&str> = columns.iter().map(String::as_str).collect();
    out.table(
        "evolution.csv",
        "evolution",
        &columns,
        decoded.iter().flat_map(|d| {
            d.evolution.iter().map(move |(k, t, p)| {
                let mut row = vec![d.seq.to_string(), k.to_string(), t.to_string()];
                row.extend(p.probs().iter().map(f64::to_string));
                row
            })
        }),
    )?;
    out.table(
        "trace.csv",
        "trace",
        &["seq", "t", "mean_n", "max_prob", "argmax_n"],
        decoded.iter().flat_map(|d| {
            d.trace.samples.iter().map(move |s| {
                vec![
                    d.seq.to_string(),
                    s.t.to_string(),
                    s.mean_n.to_string(),
                    s.max_prob.to_string(),
                    s.argmax_n.to_string(),
                ]
            })
        }),
    )?;
    let threshold = cfg.decoder.convergence_threshold;
    let mut converged = 0usize;
    let rows: Vec<Vec<String>> = decoded
        .iter()
        .map(|d| {
            let status = convergence_status(&d.collapse, threshold);
            let (label, n_star) = match status.status {
                Convergence::Converged(n) => {
                    converged += 1;
                    ("converged", n.to_string())
                }
                Convergence::NotConverged => ("not_converged", String::new()),
            };
            vec![
                d.seq.to_string(),
                d.atoms.to_string(),
                d.collapse.mean().to_string(),
                d.collapse.max_prob().to_string(),
                label.to_owned(),
                n_star,
                status.satellite_ratio.to_string(),
            ]
        })
        .collect();
    out.table(
        "convergence.csv",
        "convergence",
        &["seq", "atoms", "mean_n", "max_prob", "status", "n", "satellite_ratio"],
        rows,
    )?;
    report.summary.push(format!(
        "decoded {} sequences; {converged} above posterior {threshold}",
        decoded.len()
    ));
    if let Some(h) = input.header {
        report.summary.push(format!("records from config {}", h.config_hash));
    }
    Ok(())
}

fn profile(cfg: &RunConfig, out: &mut Outputs<'_>, report: &mut RunReport) -> Result<()> {
    let input = load_records(cfg)?;
    let mut rows = Vec::new();
    let mut curves = 0;
    for (seq, recs) in input.sequences.iter().take(cfg.decoder.profile_sequences) {
        for &atoms in cfg.decoder.profile_atoms.iter().filter(|&&n| n <= recs.len()) {
            let curve = product_profile(&cfg.probe, &recs[..atoms], cfg.decoder.profile_step)?;
            curves += 1;
            rows.extend(
                curve
                    .grid
                    .iter()
                    .zip(&curve.values)
                    .map(|(n, v)| vec![seq.to_string(), atoms.to_string(), n.to_string(), v.to_string()]),
            );
        }
    }
    out.table("profiles.csv", "profiles", &["seq", "atoms", "n", "value"], rows)?;
    report.summary.push(format!("{curves} profile curves"));
    Ok(())
}

#[derive(Serialize)]
struct CalibrationReport<'a> {
    config_hash: &'a str,
    seed: u64,
    batches: usize,
    batch_size: u32,
    field_mean: f64,
    fit: &'a CalibrationFit,
    /// `Φ/π` and `φ_i/π` of the fit.
    phase_per_photon_over_pi: f64,
    phases_over_pi: [f64; 4],
    simulated: &'a ProbeParams,
}

fn calibrate(cfg: &RunConfig, out: &mut Outputs<'_>, report: &mut RunReport) -> Result<()> {
    let c = &cfg.calibration;
    let samples: CalibrationSamples = simulate_calibration_run(&cfg.calibration_sim_config(), c.batches, c.batch_size)?;
    let rows = PhaseIndex::ALL.iter().flat_map(|&i| {
        samples.batches(i).iter().enumerate().map(move |(b, s)| {
            vec![
                i.to_string(),
                b.to_string(),
                s.eta0.to_string(),
                s.batch_size.to_string(),
            ]
        })
    });
    out.table(
        "calibration_samples.csv",
        "calibration-samples",
        &["i", "batch", "eta0", "batch_size"],
        rows.collect::<Vec<_>>(),
    )?;
    let fit = fit_calibration(&samples, c.n0)?;
    let pi = std::f64::consts::PI;
    let p = &fit.params;
    let hash = out.hash.clone();
    out.json(
        "calibration_fit.json",
        &CalibrationReport {
            config_hash: &hash,
            seed: cfg.seed,
            batches: c.batches,
            batch_size: c.batch_size,
            field_mean: c.n0,
            fit: &fit,
            phase_per_photon_over_pi: p.phase_per_photon / pi,
            phases_over_pi: p.phases.map(|x| x / pi),
            simulated: &cfg.probe,
        },
    )?;
    report.summary.push(format!(
        "A = {:.4} ± {:.4}, B = {:.4} ± {:.4}, Φ/π = {:.4} ± {:.4}{}",
        p.offset,
        fit.std_errors[0],
        p.contrast,
        fit.std_errors[1],
        p.phase_per_photon / pi,
        fit.std_errors[2] / pi,
        if fit.boundary_warning { " (on a boundary)" } else { "" }
    ));
    Ok(())
}

#[derive(Serialize)]
struct AnalysisReport<'a> {
    config_hash: &'a str,
    seed: u64,
    source_config: Option<&'a str>,
    collapse: Option<&'a CollapseSummary>,
    dynamics: Option<&'a DynamicsSummary>,
    checks: &'a [Check],
}

fn analyze(cfg: &RunConfig, out: &mut Outputs<'_>, report: &mut RunReport) -> Result<()> {
    let input = load_records(cfg)?;
    let format = cfg.output.record_format;
    let truth_path = cfg.output.dir.join(file_name(TRUTH_STEM, format));
    let truth = if truth_path.exists() {
        let parsed = read_truth(open(&truth_path)?, format).map_err(|e| locate(&truth_path, e))?;
        if let (Some(a), Some(b)) = (&input.header, &parsed.header) {
            if a.config_hash != b.config_hash || a.seed != b.seed {
                return Err(LabError::Data(format!(
                    "records (config {}, seed {}) and truth (config {}, seed {}) come from different runs",
                    a.config_hash, a.seed, b.config_hash, b.seed
                )));
            }
        }
        Some(group_truth(parsed.rows))
    } else {
        None
    };
    if input.sequences.is_empty() {
        return Err(LabError::Data("no detection records to analyze".into()));
    }

    let records: Vec<Vec<DetectionRecord>> = input.sequences.iter().map(|(_, r)| r.clone()).collect();
    let collapse = collapse_from_config(&records, cfg)?;
    let h = &collapse.histogram;
    out.table(
        "histogram.csv",
        "histogram",
        &["center", "lower", "upper", "count", "mass"],
        (0..h.bins()).map(|b| {
            let (lo, hi) = h.edges(b);
            vec![
                h.center(b).to_string(),
                lo.to_string(),
                hi.to_string(),
                h.counts[b].to_string(),
                h.mass(b).to_string(),
            ]
        }),
    )?;

    let dynamics = match &truth {
        Some(truth) => {
            let pairs = pair_with_truth(&input.sequences, truth)?;
            let prior = PhotonDistribution::flat(cfg.decoder.n_max);
            let per_seq: Vec<(u64, SequenceDynamics)> = par_map(&pairs, |(seq, recs, truth)| {
                sequence_dynamics(recs, truth, &cfg.probe, &prior, cfg.decoder.window, cfg.analysis.stability)
                    .map(|d| (*seq, d))
            })?;
            write_dynamics_tables(out, &per_seq, cfg)?;
            let only: Vec<SequenceDynamics> = per_seq.into_iter().map(|(_, d)| d).collect();
            Some(summarize_dynamics(&only, &cfg.cavity))
        }
        None => None,
    };

    let checks = run_checks(cfg, Some(&collapse), dynamics.as_ref());
    let hash = out.hash.clone();
    out.json(
        "analysis.json",
        &AnalysisReport {
            config_hash: &hash,
            seed: cfg.seed,
            source_config: input.header.as_ref().map(|h| h.config_hash.as_str()),
            collapse: Some(&collapse),
            dynamics: dynamics.as_ref(),
            checks: &checks,
        },
    )?;
    report.summary.push(format!(
        "Poisson mean {:.4}, background {:.4}, {} of {} sequences converged",
        collapse.fit.lambda_hat,
        collapse.fit.background_fraction,
        collapse.converged,
        collapse.sequences - collapse.skipped
    ));
    if let Some(d) = &dynamics {
        report.summary.push(format!(
            "{} matched jumps, median latency {}",
            d.matched_jumps,
            d.median_latency.map_or("n/a".to_owned(), |m| format!("{m:.4} s"))
        ));
    }
    report.checks = checks;
    Ok(())
}

type Paired<'a> = (u64, &'a [DetectionRecord], &'a [TruthEvent]);

fn pair_with_truth<'a>(
    sequences: &'a [(u64, Vec<DetectionRecord>)],
    truth: &'a [(u64, Vec<TruthEvent>)],
) -> Result<Vec<Paired<'a>>> {
    sequences
        .iter()
        .map(|(seq, recs)| {
            truth
                .binary_search_by_key(seq, |(s, _)| *s)
                .map(|i| (*seq, recs.as_slice(), truth[i].1.as_slice()))
                .map_err(|_| LabError::Data(format!("sequence {seq} has no truth log")))
        })
        .collect()
}

fn write_dynamics_tables(out: &mut Outputs<'_>, per_seq: &[(u64, SequenceDynamics)], cfg: &RunConfig) -> Result<()> {
    out.table(
        "staircases.csv",
        "staircases",
        &["seq", "level", "t_start", "t_end"],
        per_seq.iter().flat_map(|(seq, d)| {
            d.staircase.steps.iter().map(move |s| {
                vec![
                    seq.to_string(),
                    s.level.to_string(),
                    s.t_start.to_string(),
                    s.t_end.to_string(),
                ]
            })
        }),
    )?;
    out.table(
        "latency.csv",
        "latency",
        &["seq", "from", "to", "truth_t", "decoded_t", "latency"],
        per_seq.iter().flat_map(|(seq, d)| {
            let matched = d.latency.matched.iter().map(move |m| {
                vec![
                    seq.to_string(),
                    m.from.to_string(),
                    m.to.to_string(),
                    m.truth_t.to_string(),
                    m.decoded_t.to_string(),
                    m.latency.to_string(),
                ]
            });
            let unmatched = d.latency.unmatched.iter().map(move |&(from, to, t)| {
                vec![
                    seq.to_string(),
                    from.to_string(),
                    to.to_string(),
                    String::new(),
                    t.to_string(),
                    String::new(),
                ]
            });
            matched.chain(unmatched)
        }),
    )?;
    let only: Vec<SequenceDynamics> = per_seq.iter().map(|(_, d)| d.clone()).collect();
    let summary = summarize_dynamics(&only, &cfg.cavity);
    let rows = [("truth", &summary.truth_dwells), ("staircase", &summary.staircase_dwells)]
        .into_iter()
        .flat_map(|(source, stats)| {
            stats.iter().map(move |s| {
                vec![
                    source.to_owned(),
                    s.level.to_string(),
                    s.count.to_string(),
                    s.mean.to_string(),
                    s.std_error.to_string(),
                    s.expected.to_string(),
                ]
            })
        })
        .collect::<Vec<_>>();
    out.table(
        "dwells.csv",
        "dwells",
        &["source", "level", "count", "mean", "std_error", "expected"],
        rows,
    )
}

fn adaptive(cfg: &RunConfig, out: &mut Outputs<'_>, report: &mut RunReport) -> Result<()> {
    let n_max = cfg.adaptive.n_max;
    let schedule = adaptive_phase_schedule(n_max);
    let pi = std::f64::consts::PI;
    out.table(
        "adaptive_schedule.csv",
        "adaptive-schedule",
        &["stage", "phase_per_photon", "phase_per_photon_over_pi"],
        schedule.stages.iter().map(|s| {
            vec![
                s.index.to_string(),
                s.phase_per_photon.to_string(),
                (s.phase_per_photon / pi).to_string(),
            ]
        }),
    )?;
    let probe = ProbeParams::ideal();
    let results = (0..=n_max)
        .map(|n| adaptive_measure(n, n_max, &probe).map(|r| (n, r)))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let stages = stage_count(n_max);
    let exact = results
        .iter()
        .filter(|(n, r)| r.estimate == *n && r.atoms_used == stages)
        .count();
    out.table(
        "adaptive.csv",
        "adaptive",
        &["n_true", "estimate", "atoms_used", "correct", "outcomes"],
        results.iter().map(|(n, r)| {
            let bits: String = r.readings.iter().map(|s| char::from(b'0' + s.outcome.as_u8())).collect();
            vec![
                n.to_string(),
                r.estimate.to_string(),
                r.atoms_used.to_string(),
                (r.estimate == *n).to_string(),
                bits,
            ]
        }),
    )?;
    report.checks.push(Check {
        name: "adaptive_exact".into(),
        value: exact as f64,
        target: format!("{} of {} with {stages} atoms", n_max + 1, n_max + 1),
        passed: Some(exact == n_max + 1),
    });
    report.summary.push(format!(
        "{stages} atoms per measurement; {exact} of {} photon numbers recovered exactly",
        n_max + 1
    ));
    Ok(())
}

/// Convenience used by the CLI: a short text rendering of a report.
pub fn render_report(report: &RunReport) -> String {
    let mut s = String::new();
    for line in &report.summary {
        s.push_str(line);
        s.push('\n');
    }
    for c in &report.checks {
        s.push_str(&format!("{} {} = {} (target {})\n", c.status(), c.name, c.value, c.target));
    }
    for f in &report.files {
        s.push_str(&format!("wrote {}\n", f.display()));
    }
    s
}

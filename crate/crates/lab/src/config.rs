//! Run configuration.
//!
//! A run is described by one TOML file. Every key is optional; an empty file
//! gives the reference operating point (coherent field of mean 3.82 in a
//! cavity with `T_c = 0.130 s`, `n_t = 0.05`, the calibrated probe, 2000
//! sequences of 110 detected atoms).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use qnd_core::analysis::{DEFAULT_BIN_WIDTH, DEFAULT_STABILITY};
use qnd_core::calibration::CAL_N0;
use qnd_core::decoder::{DECODER_N_MAX, DEFAULT_CONVERGENCE_THRESHOLD, DEFAULT_PROFILE_STEP};
use qnd_core::sim::{BeamParams, OutcomeMode, SimConfig};
use qnd_core::{CavityParams, ProbeParams};

use crate::error::{LabError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub sequences: usize,
    /// Detected atoms per sequence; `0` runs every sequence for `duration`.
    pub atoms_per_sequence: u32,
    /// Sequence length in seconds.
    pub duration: f64,
    pub n0: f64,
    pub n_max_sim: usize,
    pub outcome_mode: OutcomeMode,
    pub cavity: CavityParams,
    pub probe: ProbeParams,
    pub beam: BeamParams,
    pub decoder: DecoderConfig,
    pub calibration: CalibrationConfig,
    pub analysis: AnalysisConfig,
    pub adaptive: AdaptiveConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecoderConfig {
    pub window: usize,
    pub n_max: usize,
    pub profile_step: f64,
    pub convergence_threshold: f64,
    /// Atom counts at which `profile` evaluates the continuous curve.
    pub profile_atoms: Vec<usize>,
    /// Number of leading sequences that `profile` draws curves for.
    pub profile_sequences: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    pub batches: usize,
    pub batch_size: u32,
    pub n0: f64,
    pub outcome_mode: OutcomeMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub bin_width: f64,
    pub stability: usize,
    /// Atom count by which a converged sequence should have reached
    /// `convergence_probability`.
    pub convergence_atoms: usize,
    pub convergence_probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptiveConfig {
    pub n_max: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordFormat {
    #[default]
    Jsonl,
    Csv,
}

impl RecordFormat {
    pub fn extension(self) -> &'static str {
        match self {
            Self::Jsonl => "jsonl",
            Self::Csv => "csv",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub record_format: RecordFormat,
}

impl Default for RunConfig {
    fn default() -> Self {
        let sim = SimConfig::experiment();
        Self {
            seed: sim.seed,
            sequences: 2000,
            atoms_per_sequence: 110,
            duration: sim.duration,
            n0: sim.n0,
            n_max_sim: sim.n_max_sim,
            outcome_mode: sim.outcome_mode,
            cavity: sim.cavity,
            probe: sim.probe,
            beam: sim.beam,
            decoder: DecoderConfig::default(),
            calibration: CalibrationConfig::default(),
            analysis: AnalysisConfig::default(),
            adaptive: AdaptiveConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            window: 110,
            n_max: DECODER_N_MAX,
            profile_step: DEFAULT_PROFILE_STEP,
            convergence_threshold: DEFAULT_CONVERGENCE_THRESHOLD,
            profile_atoms: vec![1, 5, 10, 20, 30, 50],
            profile_sequences: 2,
        }
    }
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            batches: 10_000,
            batch_size: 50,
            n0: CAL_N0,
            outcome_mode: OutcomeMode::Offset,
        }
    }
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            bin_width: DEFAULT_BIN_WIDTH,
            stability: DEFAULT_STABILITY,
            convergence_atoms: 60,
            convergence_probability: 0.8,
        }
    }
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        Self { n_max: 7 }
    }
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            record_format: RecordFormat::Jsonl,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| LabError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config always serializes")
    }

    /// Simulator settings for this run.
    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            n0: self.n0,
            cavity: self.cavity,
            probe: self.probe,
            beam: self.beam,
            n_max_sim: self.n_max_sim,
            duration: self.duration,
            max_atoms: (self.atoms_per_sequence > 0).then_some(self.atoms_per_sequence),
            outcome_mode: self.outcome_mode,
            seed: self.seed,
        }
    }

    /// Simulator settings for the calibration field.
    pub fn calibration_sim_config(&self) -> SimConfig {
        SimConfig {
            n0: self.calibration.n0,
            outcome_mode: self.calibration.outcome_mode,
            ..self.sim_config()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(LabError::Config(msg));
        self.sim_config()
            .validate()
            .map_err(|e| LabError::Config(e.to_string()))?;
        let d = &self.decoder;
        if d.window == 0 {
            return bad("decoder.window must be at least 1".into());
        }
        if d.n_max == 0 {
            return bad("decoder.n_max must be at least 1".into());
        }
        if !(d.profile_step > 0.0 && d.profile_step.is_finite()) {
            return bad(format!("decoder.profile_step must be positive, got {}", d.profile_step));
        }
        if !(d.convergence_threshold > 0.0 && d.convergence_threshold <= 1.0) {
            return bad("decoder.convergence_threshold must lie in (0, 1]".into());
        }
        let c = &self.calibration;
        if c.batch_size == 0 {
            return bad("calibration.batch_size must be at least 1".into());
        }
        if !(c.n0 >= 0.0 && c.n0.is_finite()) {
            return bad("calibration.n0 must be non-negative".into());
        }
        let a = &self.analysis;
        if !(a.bin_width > 0.0 && a.bin_width <= 1.0) {
            return bad("analysis.bin_width must lie in (0, 1]".into());
        }
        if a.stability == 0 {
            return bad("analysis.stability must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&a.convergence_probability) {
            return bad("analysis.convergence_probability must lie in [0, 1]".into());
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON encoding, as lowercase hex. Output
    /// settings are left out so that moving a run does not change its hash.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("run config always serializes");
        if let Some(map) = value.as_object_mut() {
            map.remove("output");
        }
        hex::encode(Sha256::digest(value.to_string().as_bytes()))
    }
}

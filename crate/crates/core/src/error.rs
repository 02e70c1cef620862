use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("mean photon number must be non-negative, got {0}")]
    NegativeMean(f64),
    #[error("truncation at n_max = {n_max} keeps only {kept:.6} of the Poisson mass")]
    Truncation { n_max: usize, kept: f64 },
    #[error("invalid photon distribution: {0}")]
    InvalidDistribution(&'static str),
    #[error("invalid probe parameters: {0}")]
    InvalidProbe(&'static str),
    #[error("invalid cavity parameters: {0}")]
    InvalidCavity(&'static str),
    #[error("zero atom-cavity detuning: dispersive phase shift undefined")]
    ZeroDetuning,
    #[error("record stream is impossible under the probe model (all posterior weights vanish)")]
    ImpossibleRecord,
    #[error("profile grid step {0} must be positive and divide the span evenly")]
    GridStep(f64),
    #[error("invalid simulation config: {0}")]
    InvalidConfig(&'static str),
    #[error("matched outcome mode needs a positive fringe offset")]
    ZeroOffset,
    #[error("calibration samples contain no batch for phase {0}")]
    MissingPhase(char),
    #[error("calibration fit is not identifiable: {0}")]
    Degenerate(&'static str),
    #[error("photon number {n} outside 0..={n_max}")]
    OutOfRange { n: usize, n_max: usize },
    #[error("adaptive measurement needs ideal fringes (A = B = 1)")]
    NonIdealContrast,
    #[error("histogram has no mass on integer-centred bins")]
    NoPeakMass,
    #[error("empty input: {0}")]
    Empty(&'static str),
}

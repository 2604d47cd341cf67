use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("mode index {0} out of range 0..=3")]
    InvalidMode(usize),
    #[error("invalid mode pair ({0}, {1}): a two-mode squeezer needs distinct modes")]
    InvalidModePair(usize, usize),
    #[error("transform is not unitary: |u'u - I| = {0:.3e}")]
    NonUnitary(f64),
    #[error("efficiency {value} for mode {mode} is outside [0, 1]")]
    InvalidEfficiency { mode: usize, value: f64 },
    #[error("parameter `{0}` must be finite")]
    NonFinite(&'static str),
    #[error("gain must be non-negative, got {0}")]
    NegativeGain(f64),
    #[error("Stokes index {0} out of range 0..=3")]
    InvalidStokesIndex(usize),
    #[error("covariance matrix is not a physical state: {0}")]
    Unphysical(String),
    #[error("gain {0} is outside the Fock oracle regime (gain <= 1.5)")]
    OracleRegime(f64),
    #[error("truncation tail {tail:.3e} exceeds {limit:.1e} (gain {gamma}, cutoff {cutoff})")]
    Truncation {
        gamma: f64,
        cutoff: usize,
        tail: f64,
        limit: f64,
    },
    #[error("need at least {needed} pulse records, got {got}")]
    TooFewRecords { needed: usize, got: usize },
    #[error("mean detector sum is zero; NRF is undefined")]
    ZeroMeanSum,
    #[error("pulse records mix analyzer settings")]
    MixedSettings,
    #[error("invalid detector model: {0}")]
    InvalidDetector(String),
    #[error("mean photon number must be positive, got {0}")]
    NonPositivePhotons(f64),
    #[error("invalid scenario: {}", .0.join("; "))]
    Config(Vec<String>),
    #[error("{0}")]
    Io(String),
}

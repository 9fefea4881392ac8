//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by graph construction, model fitting, simulation and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("subsystem name must be non-empty")]
    EmptyName,

    #[error("duplicate subsystem `{0}`")]
    DuplicateNode(String),

    #[error("unknown subsystem `{0}`")]
    UnknownNode(String),

    #[error("duplicate edge `{from}` -> `{to}`")]
    DuplicateEdge { from: String, to: String },

    #[error("self-loop `{0}` -> `{0}` is not allowed")]
    SelfLoop(String),

    #[error("invalid criterion weights: {0}")]
    InvalidWeights(String),

    #[error("theta must lie in [0, 1], got {0}")]
    InvalidTheta(f64),

    #[error("health states cover a different node set than the graph: {0}")]
    HealthMismatch(String),

    #[error("candidate `{0}` cannot reach any target symptom")]
    NotACandidate(String),

    #[error("symptom set must be non-empty")]
    EmptySymptoms,

    #[error("invalid time series: {0}")]
    InvalidFrame(String),

    #[error("invalid subsystem-signals map: {0}")]
    InvalidMap(String),

    #[error("signal mismatch: {0}")]
    SignalMismatch(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("rank deficiency: {got} windows available but latent dimension is {want}")]
    RankDeficient { got: usize, want: usize },

    #[error("training diverged (non-finite loss) at learning rate {0}")]
    Diverged(f64),

    #[error("thresholds are not calibrated for subsystem `{0}`")]
    Uncalibrated(String),

    #[error("invalid binarization config: {0}")]
    InvalidConfig(String),

    #[error("invalid graph sampling parameters: {0}")]
    InvalidSampling(String),

    #[error("invalid system parameters: {0}")]
    InvalidSystem(String),

    #[error("invalid fault spec: {0}")]
    InvalidFault(String),

    #[error("integration produced a non-finite state at step {step}; dt = {dt} is too large for this system")]
    UnstableIntegration { step: usize, dt: f64 },

    #[error("invalid annotation: {0}")]
    InvalidAnnotation(String),

    #[error("signal names do not match the extraction pattern: {0}")]
    PatternMismatch(String),

    #[error("invalid sweep thresholds: {0}")]
    InvalidSweep(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("{context}: {source}")]
    Csv {
        context: String,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { context: context.into(), source }
    }

    pub fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json { context: context.into(), source }
    }

    pub fn csv(context: impl Into<String>, source: csv::Error) -> Self {
        Error::Csv { context: context.into(), source }
    }

    /// True for errors caused by invalid inputs rather than runtime failures.
    /// The CLI maps these to exit code 2.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::UnstableIntegration { .. } | Error::Diverged(_) | Error::Io { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

/// Errors raised by the field, path and estimator layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("grid size {size} too coarse for {n_max} levels: need at least N = {minimal} cells per axis")]
    Resolution {
        size: usize,
        n_max: usize,
        minimal: usize,
    },

    #[error("layer {layer}: negative spectral mass {fraction:.3e} of the trace exceeds the clip tolerance")]
    SpectralClip { layer: usize, fraction: f64 },

    #[error("level {level} out of range 1..={n_max}")]
    LevelOutOfRange { level: usize, n_max: usize },

    #[error("time step {dt:e} too coarse for level {level}: maximal step is {max_dt:e}")]
    StepTooCoarse { dt: f64, level: usize, max_dt: f64 },

    #[error("horizon exhausted: clock reached {reached} before the requested time {requested}")]
    HorizonExhausted { reached: f64, requested: f64 },

    #[error("step budget of {steps} exhausted at clock {clock:.4}: undiscounted mass e^(-lambda F) = {discount:.3e} is still above tolerance")]
    StepBudget {
        steps: u64,
        clock: f64,
        discount: f64,
    },

    #[error("measure has zero total mass")]
    ZeroMass,

    #[error("M-mean of f is {mean:.3e}, beyond tolerance {tolerance:.3e}: the Green function needs a zero-mean integrand")]
    NonZeroMean { mean: f64, tolerance: f64 },

    #[error("insufficient signal: every pair difference is below the noise floor {noise:.3e}")]
    InsufficientSignal { noise: f64 },

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("malformed field snapshot: {0}")]
    Snapshot(String),

    #[error("experiment `{experiment}`: {source}")]
    Experiment {
        experiment: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

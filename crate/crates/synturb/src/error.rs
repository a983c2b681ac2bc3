use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter fell outside its admissible range.
    #[error("parameter domain: {0}")]
    ParamDomain(String),

    /// Spectral band is empty or inverted (requires ell1 < ell0).
    #[error("empty inertial band: ell0 = {ell0}, ell1 = {ell1}")]
    EmptyBand { ell0: f64, ell1: f64 },

    /// Only d = 2 and d = 3 are supported.
    #[error("unsupported dimension {0} (expected 2 or 3)")]
    UnsupportedDim(usize),

    /// Adaptive quadrature stopped before reaching the requested tolerance.
    #[error("quadrature did not converge: requested rel tol {requested:.3e}, achieved {achieved:.3e}")]
    QuadratureTolerance { requested: f64, achieved: f64 },

    /// A time step request violated the stiffness bound for the fastest mode.
    #[error("time step {dt:.3e} exceeds stability bound {bound:.3e} (= safety / max OU rate)")]
    StepStability { dt: f64, bound: f64 },

    /// Simulation or estimator input was internally inconsistent.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Not enough data to produce the requested statistic.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("config: {0}")]
    Config(String),

    #[error("snapshot format: {0}")]
    SnapshotFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("table: {0}")]
    Csv(#[from] Box<csv::Error>),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(Box::new(e))
    }
}

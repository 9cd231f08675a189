use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("eigenvalue {index}: root bracketing failed ({detail})")]
    Convergence { index: usize, detail: String },

    #[error("eigenvalue {index} is exactly zero; shift the potential by a constant")]
    ZeroEigenvalue { index: usize },

    #[error("source is degenerate: every mode coefficient is below threshold")]
    DegenerateSource,

    #[error("operator has numerical rank 0; no modes recoverable")]
    EmptyData,

    #[error("mode pairing failed; orphan lambdas {orphans:?}")]
    Pairing { orphans: Vec<f64> },

    #[error("consistency check failed: {0}")]
    Consistency(String),

    #[error("degenerate spectrum: duplicate eigenvalue {0}")]
    DegenerateSpectrum(f64),

    #[error("infeasible truncation schedule: delta/(2 n^2) = {ratio} >= 1")]
    InfeasibleSchedule { ratio: f64 },

    #[error("norming coefficient {index} is nonpositive ({value}); extraction likely failed")]
    SignConsistency { index: usize, value: f64 },

    #[error("unsupported spectrum: eigenvalue {index} equals zero")]
    UnsupportedSpectrum { index: usize },

    #[error("ill-conditioned system at {at} = {position}: condition estimate {cond:e}")]
    IllConditioned {
        at: &'static str,
        position: f64,
        cond: f64,
    },

    #[error("mu vanishes at interior tau = {tau}")]
    SingularDivision { tau: f64 },

    #[error("eigenfunction {index} has degenerate slope {slope:e}")]
    DegenerateSlope { index: usize, slope: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

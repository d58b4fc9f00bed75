use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The linearized dynamics have no steady state (anti-damped).
    #[error("unstable system: {0}")]
    Instability(String),

    /// A linear solve or eigen-decomposition failed or is untrustworthy.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The steady state of a Liouvillian is not unique.
    #[error("degenerate steady state: kernel dimension appears to be {0}")]
    Multiplicity(usize),

    /// The Fock-space truncation is too small for the requested state.
    #[error("truncation too small: population {tail:.3e} in top level of N = {n}")]
    Truncation { n: usize, tail: f64 },

    /// Iterative fit did not converge.
    #[error("fit did not converge after {0} iterations")]
    NonConvergence(usize),

    /// The least-squares design matrix is rank deficient.
    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Json(_) => 2,
            Error::Instability(_) => 3,
            _ => 4,
        }
    }
}

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter is NaN, infinite, or outside its allowed range.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// An operation was called outside the physical regime it is defined for.
    #[error("domain violation: {0}")]
    Domain(String),

    /// The analytic propagator only exists on the χ = −π/4 − 2nπ lattice.
    #[error("analytic propagator requires chi = -pi/4 - 2n*pi (got chi = {chi}); use the oracle path")]
    OffLattice { chi: f64 },

    #[error("excitation sector N = {0} has no 4x4 block (N must be >= 1)")]
    GroundSector(usize),

    #[error("no revival detected: {0}")]
    NoRevival(String),

    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),

    #[error("time step {dt} violates the integrator bound {bound}")]
    TimeStep { dt: f64, bound: f64 },

    #[error("coherent-state tail {tail:e} not reachable with n_max <= {limit}")]
    Truncation { tail: f64, limit: usize },

    /// Malformed configuration or schedule text, with a 1-based position.
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{0}")]
    Io(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Whether this error is a configuration problem (as opposed to a physics
    /// precondition). The CLI maps the two classes to different exit codes.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Parse { .. } | Error::Io(_))
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

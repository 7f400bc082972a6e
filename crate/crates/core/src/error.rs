use thiserror::Error;

/// Errors raised by the key-rate library.
///
/// Infeasible parameter points are *not* errors: they are reported through
/// [`crate::rate::KeyRateReport::feasible`] so optimization sweeps stay total.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the function.
    #[error("domain error: {0}")]
    Domain(String),

    /// The intensity profile violates an ordering, count or normalization rule.
    #[error("invalid intensity profile: {0}")]
    Profile(String),

    /// The channel produces a zero gain, so error rates are undefined.
    #[error("degenerate channel: {0}")]
    DegenerateChannel(String),

    /// The security-parameter fixed point did not settle.
    #[error("fixed point did not converge after {iterations} iterations (trace: {trace:?})")]
    NoConvergence { iterations: usize, trace: Vec<f64> },

    /// A configuration file or flag could not be parsed or validated.
    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

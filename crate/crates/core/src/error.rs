use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("argument outside the domain of {function}: {reason}")]
    Domain {
        function: &'static str,
        reason: String,
    },

    #[error("pole of the gamma function at x = {0}")]
    Pole(f64),

    #[error("{series} did not converge within {terms} terms (last tail estimate {tail:e})")]
    NonConvergence {
        series: &'static str,
        terms: usize,
        tail: f64,
    },

    #[error("{what}: rounding error bound {bound:e} exceeds the usable range")]
    PrecisionLoss { what: &'static str, bound: f64 },

    #[error("{function} requires the {required} rate regime")]
    Regime {
        function: &'static str,
        required: &'static str,
    },

    #[error("no bracket for the maximiser found within |gamma| <= {limit}")]
    BracketFailure { limit: f64 },

    #[error("unsupported regime: {0}")]
    UnsupportedRegime(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

pub(crate) fn domain(function: &'static str, reason: impl Into<String>) -> Error {
    Error::Domain {
        function,
        reason: reason.into(),
    }
}

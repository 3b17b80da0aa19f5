use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("state {0:?} lies outside the model domain")]
    DomainViolation(Vec<f64>),
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("invalid parameter `{key}`: {reason}")]
    InvalidParameter { key: String, reason: String },
    #[error("model `{0}` has no closed-form solution")]
    MissingExactSolution(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SamplerError {
    #[error("substep {0} must lie in (0, 1e-3]")]
    InvalidSubstep(f64),
    #[error("no sphere exit within {0} iterations")]
    BudgetExceeded(u64),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SchemeError {
    #[error("G process returned {value} at t = {time}; it must be finite and positive")]
    InvalidG { time: f64, value: f64 },
    #[error("invalid time change: {0}")]
    InvalidTimeChange(String),
    #[error("scheme {0} needs a constant G process")]
    NonConstantG(&'static str),
    #[error("invalid resolution n = {0}")]
    InvalidResolution(u64),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AsymptoticsError {
    #[error("argument {value} outside (0, {bound}]")]
    OutOfRange { value: f64, bound: f64 },
    #[error("schemes use different G processes")]
    MismatchedG,
    #[error("the limit simulator needs a one-dimensional model, got p = {0}")]
    NotOneDimensional(usize),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("`{key}`: {message}")]
    Validation { key: String, message: String },
}

impl ConfigError {
    pub(crate) fn invalid(key: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::Validation {
            key: key.into(),
            message: message.into(),
        }
    }
}

/// Crate-wide error.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    Asymptotics(#[from] AsymptoticsError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("horizon {0} must be positive and finite")]
    InvalidHorizon(f64),
    #[error("{excluded} of {total} paths left the domain (limit 0.1%)")]
    TooManyExclusions { excluded: u64, total: u64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("state {state:?} lies outside the state bounds by more than mu")]
    OutOfDomain { state: Vec<f64> },

    #[error("no safe policy at the nominal initial condition")]
    NoSafePolicy,

    #[error("no backup parameters are safe at state {state:?}")]
    NoBackup { state: Vec<f64> },

    #[error("integration diverged at t = {time}")]
    IntegrationDiverged { time: f64 },

    #[error("no safe seed: {0}")]
    NoSafeSeed(String),

    #[error("unknown {kind} `{name}` (available: {available})")]
    UnknownName {
        kind: &'static str,
        name: String,
        available: String,
    },

    #[error("invalid config field `{field}`: {message}")]
    InvalidConfig { field: String, message: String },

    #[error("oracle: {0}")]
    Oracle(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// An [`Error::InvalidConfig`] for `field`.
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            message: message.into(),
        }
    }
}

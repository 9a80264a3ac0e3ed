use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid control set: {0}")]
    ControlSet(String),

    #[error("invalid staircase signal: {0}")]
    Signal(String),

    #[error("invalid harmonic indices: {0}")]
    Harmonics(String),

    #[error("{what} = {value} is outside {domain}")]
    Domain {
        what: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid penalty: {0}")]
    Penalty(String),

    #[error("invalid time grid: {0}")]
    Grid(String),

    #[error("enumeration would produce {count} candidates, budget is {budget}")]
    Budget { count: u128, budget: u128 },

    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}

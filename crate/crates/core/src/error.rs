use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid system parameters: {0}")]
    InvalidParams(String),

    #[error("invalid action profile: {0}")]
    InvalidProfile(String),

    #[error("test period {t} outside [1, {horizon}]")]
    TestPeriodOutOfRange { t: usize, horizon: usize },

    #[error("user index {user} out of range for {n_users} users")]
    UserOutOfRange { user: usize, n_users: usize },

    #[error("signal count {k} outside [0, {t}]")]
    SignalOutOfRange { k: usize, t: usize },

    #[error("rule has {len} levels but test period {t} needs {}", t + 1)]
    RuleLengthMismatch { len: usize, t: usize },

    #[error("intervention level {value} at index {index} is not a probability")]
    InvalidLevel { index: usize, value: f64 },

    #[error("invalid LP instance: {0}")]
    InvalidInstance(String),

    #[error("no test period admits a feasible intervention rule")]
    NoFeasiblePeriod,

    #[error("internal consistency violation: {0}")]
    Inconsistent(String),
}

pub type Result<T> = std::result::Result<T, Error>;

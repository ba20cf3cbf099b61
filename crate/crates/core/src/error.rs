use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("rotation is not orthonormal (deviation {0:.3e})")]
    InvalidPose(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),

    #[error("bad value `{value}` for key `{key}`: {reason}")]
    BadValue {
        key: String,
        value: String,
        reason: String,
    },

    #[error("{0}")]
    InvalidInput(String),
}

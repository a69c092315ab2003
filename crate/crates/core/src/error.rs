use thiserror::Error;

/// Errors raised by the placement engine, the workload builders and the
/// config loader.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum OsmosisError {
    #[error("concentration needs at least one resource property")]
    NoProperties,

    #[error("fitness weights sum to zero")]
    DegenerateWeights,

    #[error("property/weight length mismatch: {properties} properties, {weights} weights")]
    LengthMismatch { properties: usize, weights: usize },

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("all fitness values are zero; roulette distribution is undefined")]
    DegenerateDistribution,

    #[error("threshold sum is zero")]
    ZeroThresholdSum,

    #[error("configuration error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("service {0} is not divisible")]
    Indivisible(String),

    #[error("no server in the {0} layer admits the demand")]
    Overflow(crate::domain::LayerKind),

    #[error("malformed output file: {0}")]
    Malformed(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl OsmosisError {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        OsmosisError::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = OsmosisError> = std::result::Result<T, E>;

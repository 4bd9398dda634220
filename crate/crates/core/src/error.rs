use thiserror::Error;

pub type Result<T> = std::result::Result<T, BlendError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BlendError {
    /// Shapes, channel counts or list lengths that do not line up.
    #[error("structural error: {0}")]
    Structural(String),

    #[error("{what} index {index} out of range (len {len})")]
    OutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("degenerate layout: {0}")]
    DegenerateLayout(String),

    #[error("unsupported topology: region {region} has {holes} hole(s)")]
    UnsupportedTopology { region: usize, holes: usize },

    #[error("data unavailable at boundary point {point}: {reason}")]
    DataUnavailable { point: usize, reason: String },

    #[error("numerical degeneracy: {0}")]
    Numerical(String),

    #[error("rank-deficient system: {0}")]
    RankDeficient(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),
}

impl BlendError {
    pub(crate) fn structural(msg: impl Into<String>) -> Self {
        BlendError::Structural(msg.into())
    }

    pub(crate) fn parameter(msg: impl Into<String>) -> Self {
        BlendError::Parameter(msg.into())
    }
}

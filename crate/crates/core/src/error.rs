use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("pulse index {index} out of range for {len} pulses")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("road angle {alpha_deg:.3}° is degenerate for the y-intercept translation")]
    DegenerateAngle { alpha_deg: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("block size {block} does not divide N = {n}")]
    Divisibility { block: usize, n: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("mask is {got:?} but the clutter grid is {expected:?}")]
    MaskMismatch {
        got: (usize, usize),
        expected: (usize, usize),
    },

    #[error("clutter RCS is zero")]
    ZeroClutter,

    #[error("output of {cells} cells exceeds the limit of {limit}")]
    OutputTooLarge { cells: usize, limit: usize },

    #[error("scene parse error: {0}")]
    SceneParse(String),

    #[error("invalid scene field `{field}`: {reason}")]
    SceneField { field: String, reason: String },

    #[error("bad file format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn field(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::SceneField {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by unreadable or malformed input files.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Io(_) | Error::Format(_) | Error::SceneParse(_) | Error::SceneField { .. }
        )
    }
}

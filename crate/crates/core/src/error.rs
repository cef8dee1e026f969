use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left_rows}x{left_cols} vs {right_rows}x{right_cols}")]
    ShapeMismatch {
        op: &'static str,
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },
    #[error("loss must be a 1x1 scalar, got {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },
    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("non-finite values in {0}")]
    NonFinite(&'static str),
    #[error("sensitive group {0} is empty")]
    EmptyGroup(u8),
    #[error("node mask is empty")]
    EmptyMask,
    #[error("index {index} out of bounds for {len} rows")]
    IndexOutOfBounds { index: usize, len: usize },
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("cannot split nodes: {0}")]
    Split(String),
    #[error("non-finite total loss at epoch {epoch} (mse={mse}, mmd={mmd}, dist={dist})")]
    NonFiniteLoss {
        epoch: usize,
        mse: f64,
        mmd: f64,
        dist: f64,
    },
}

impl Error {
    pub(crate) fn shape(op: &'static str, left: (usize, usize), right: (usize, usize)) -> Self {
        Error::ShapeMismatch {
            op,
            left_rows: left.0,
            left_cols: left.1,
            right_rows: right.0,
            right_cols: right.1,
        }
    }

    /// True for failures caused by numerical blow-up rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFiniteGradient(_) | Error::NonFinite(_) | Error::NonFiniteLoss { .. }
        )
    }
}

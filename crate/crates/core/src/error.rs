use thiserror::Error;

pub type Result<T> = std::result::Result<T, PnpError>;

#[derive(Debug, Error)]
pub enum PnpError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("right-hand side has non-zero mean {mean:e} (l2 norm {norm:e})")]
    NonZeroMean { mean: f64, norm: f64 },

    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("coefficient {value:e} at index {index} is not strictly positive")]
    NonPositiveCoefficient { index: usize, value: f64 },

    #[error("concentration {value:e} at cell {index} is not strictly positive")]
    NonPositiveConcentration { index: usize, value: f64 },

    #[error("nonlinear iteration did not converge after {iterations} iterations (increment {increment:e}, residual {residual:e})")]
    PicardNoConvergence {
        iterations: usize,
        increment: f64,
        residual: f64,
    },

    #[error("iterate lost positivity at cell {cell} (value {value:e}); time step too large for the inner iteration")]
    PositivityLoss { cell: usize, value: f64 },

    #[error("expected a {expected}D grid, got {found}D")]
    WrongDimension { expected: usize, found: usize },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid value for `{key}`: {reason}")]
    Validation { key: String, reason: String },

    #[error("malformed field file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl PnpError {
    /// Process exit status used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            PnpError::Parse { .. } | PnpError::Validation { .. } => 2,
            PnpError::NoConvergence { .. } | PnpError::PicardNoConvergence { .. } | PnpError::Io(_) => 3,
            PnpError::NonZeroMean { .. }
            | PnpError::NonPositiveCoefficient { .. }
            | PnpError::NonPositiveConcentration { .. }
            | PnpError::PositivityLoss { .. } => 4,
            PnpError::InvalidGrid(_)
            | PnpError::InvalidParameter { .. }
            | PnpError::WrongDimension { .. }
            | PnpError::Format(_)
            | PnpError::GridMismatch => 2,
        }
    }

    /// Short machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            PnpError::InvalidGrid(_) => "InvalidGrid",
            PnpError::GridMismatch => "GridMismatch",
            PnpError::InvalidParameter { .. } => "InvalidParameter",
            PnpError::NonZeroMean { .. } => "NonZeroMean",
            PnpError::NoConvergence { .. } => "NoConvergence",
            PnpError::NonPositiveCoefficient { .. } => "NonPositiveCoefficient",
            PnpError::NonPositiveConcentration { .. } => "NonPositiveConcentration",
            PnpError::PicardNoConvergence { .. } => "PicardNoConvergence",
            PnpError::PositivityLoss { .. } => "PositivityLoss",
            PnpError::WrongDimension { .. } => "WrongDimension",
            PnpError::Parse { .. } => "ParseError",
            PnpError::Validation { .. } => "ValidationError",
            PnpError::Format(_) => "FormatError",
            PnpError::Io(_) => "IoError",
        }
    }
}

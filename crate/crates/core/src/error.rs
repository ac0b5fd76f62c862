use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// The ISFFT matrix with the zeroed rows and empty columns removed is
    /// (numerically) singular; pick different bin placements.
    #[error("reduced ISFFT matrix is singular (relative smallest singular value {sigma_rel:.3e})")]
    SingularReducedMatrix { sigma_rel: f64 },

    #[error("explicit operator of dimension {dim} exceeds cap {cap}")]
    GridTooLargeForExplicitOperator { dim: usize, cap: usize },

    #[error("TF bin ({0}, {1}) assigned as private more than once")]
    DuplicatePrivateBin(usize, usize),

    #[error("antenna index {index} out of range for {n_tx} transmit antennas")]
    AntennaOutOfRange { index: usize, n_tx: usize },

    #[error("bin ({0}, {1}) lies outside the grid")]
    BinOutOfRange(usize, usize),

    #[error("requested {requested} targets but the receive array has only {n_rx} elements")]
    TooManyTargets { requested: usize, n_rx: usize },

    #[error("found {found} separated spectral peaks, expected {expected}")]
    PeakSeparationFailure { found: usize, expected: usize },

    #[error("steering matrix condition number {cond:.3e} exceeds {limit:.1e}")]
    IllConditionedSteering { cond: f64, limit: f64 },

    #[error("transmit symbol on private bin ({0}, {1}) is (numerically) zero")]
    ZeroPrivateSymbol(usize, usize),

    #[error("dictionary with {columns} columns exceeds cap {cap}")]
    DictionaryTooLarge { columns: usize, cap: usize },

    #[error("expected {expected} bits, got {got}")]
    BitCountMismatch { expected: usize, got: usize },

    #[error("invalid configuration: {field}: {message}")]
    ConfigValidation { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::ConfigValidation {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::SingularReducedMatrix { .. } => "SingularReducedMatrix",
            Error::GridTooLargeForExplicitOperator { .. } => "GridTooLargeForExplicitOperator",
            Error::DuplicatePrivateBin(..) => "DuplicatePrivateBin",
            Error::AntennaOutOfRange { .. } => "AntennaOutOfRange",
            Error::BinOutOfRange(..) => "BinOutOfRange",
            Error::TooManyTargets { .. } => "TooManyTargets",
            Error::PeakSeparationFailure { .. } => "PeakSeparationFailure",
            Error::IllConditionedSteering { .. } => "IllConditionedSteering",
            Error::ZeroPrivateSymbol(..) => "ZeroPrivateSymbol",
            Error::DictionaryTooLarge { .. } => "DictionaryTooLarge",
            Error::BitCountMismatch { .. } => "BitCountMismatch",
            Error::ConfigValidation { .. } => "ConfigValidationError",
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
            Error::Csv(_) => "Csv",
        }
    }
}

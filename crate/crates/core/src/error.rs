use thiserror::Error;

/// Error type shared by every module in this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// No prime below the 2^62 arithmetic ceiling was found at or above the
    /// requested starting point.
    #[error("prime search starting at {0} left the supported range (< 2^62)")]
    PrimeSearchOverflow(u64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("seed width mismatch: expected {expected} bits, got {got} bits")]
    WidthMismatch { expected: u32, got: u32 },

    /// A finite bit source was asked for more bits than it holds.
    #[error("bit stream exhausted")]
    StreamExhausted,

    /// Exact enumeration was requested for a seed space too large to walk.
    #[error("seed space of {0} bits is too large to enumerate")]
    SeedSpaceTooLarge(u32),

    /// A density ratio came back outside the bound the randomizer declared.
    #[error("density ratio {ratio} exceeds the declared bound {bound}")]
    DensityRatioOutOfRange { ratio: f64, bound: f64 },

    #[error("index {index} out of range for domain of size {domain}")]
    IndexOutOfRange { index: u64, domain: u64 },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("quadrature failed to reach the requested tolerance")]
    QuadratureNonConvergence,

    #[error("malformed wire data: {0}")]
    WireFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code the command line tool maps this error to:
    /// 2 for configuration and parameter problems, 3 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) | Error::Csv(_) => 3,
            _ => 2,
        }
    }
}

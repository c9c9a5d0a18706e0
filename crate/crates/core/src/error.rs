//! Error type shared by all modules of the crate.

/// Errors produced by tensor construction, fusion algorithms and file I/O.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Incompatible shapes between operands.
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    /// A requested decomposition rank exceeds what the data admits.
    #[error("rank {rank} out of range (limit {limit})")]
    RankOutOfRange { rank: usize, limit: usize },

    /// The induced linear operator of a Sylvester system is (numerically)
    /// singular: the smallest spectrum value fell below the tolerance.
    #[error("singular operator: spectrum minimum {sigma_min:.3e} below tolerance {tol:.3e}")]
    SingularOperator { sigma_min: f64, tol: f64 },

    /// A value that must be finite was NaN or infinite.
    #[error("non-finite value at flat index {0}")]
    NonFinite(usize),

    /// Invalid argument outside the more specific categories.
    #[error("invalid argument: {0}")]
    InvalidArg(String),

    /// An operation that requires nonzero input received a zero array.
    #[error("zero input: {0}")]
    ZeroInput(&'static str),

    /// Failure inside one spatial block of a blocked algorithm.
    #[error("block ({block_i},{block_j}): {source}")]
    Block {
        block_i: usize,
        block_j: usize,
        #[source]
        source: Box<Error>,
    },

    /// File did not start with the expected magic bytes.
    #[error("bad magic: expected {expected}")]
    BadMagic { expected: &'static str },

    /// File carries a format version this build does not read.
    #[error("unsupported version {found}")]
    UnsupportedVersion { found: u16 },

    /// File ended before the declared payload was complete.
    #[error("truncated payload: expected {expected} bytes, got {actual}")]
    TruncatedPayload { expected: u64, actual: u64 },

    /// Declared dimensions overflow addressable memory.
    #[error("dimension overflow: {0}")]
    DimOverflow(String),

    /// Experiment configuration is malformed or inconsistent.
    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Wrap an error with the spatial block coordinates it occurred in.
    pub fn in_block(self, block_i: usize, block_j: usize) -> Error {
        Error::Block {
            block_i,
            block_j,
            source: Box::new(self),
        }
    }
}

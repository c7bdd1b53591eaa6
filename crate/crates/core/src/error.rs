use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("filter {index} has zero norm and cannot be normalized")]
    ZeroFilter { index: usize },

    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),

    #[error("dimension mismatch: expected length {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("operator rows are not normalized (row {row} has norm {norm})")]
    NotNormalized { row: usize, norm: f64 },

    #[error("sparsity {k} exceeds the number of blocks {blocks}")]
    SparsityTooLarge { k: usize, blocks: usize },

    #[error("switch {switch} of region {region} is outside the region (size {size})")]
    SwitchOutOfRange {
        region: usize,
        switch: usize,
        size: usize,
    },

    #[error("objective became non-finite at iteration {iteration}")]
    NonFiniteObjective { iteration: usize },

    #[error("enumeration of {count} supports exceeds the cap of {cap}")]
    EnumerationTooLarge { count: u128, cap: u128 },

    #[error("distortion constants out of range: delta_k={delta_k}, delta_2k={delta_2k}")]
    DeltaOutOfRange { delta_k: f64, delta_2k: f64 },

    #[error("bad histogram range [{lo}, {hi})")]
    BadRange { lo: f64, hi: f64 },

    #[error("no non-degenerate signal after {attempts} draws")]
    DegenerateSignal { attempts: usize },

    #[error("malformed filter bank file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

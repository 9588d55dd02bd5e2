use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("query for {n} is beyond the target set limit {limit}")]
    QueryBeyondLimit { n: u64, limit: u64 },

    #[error("{path}:{line}: cannot parse {content:?} as a positive integer")]
    Parse {
        path: PathBuf,
        line: usize,
        content: String,
    },

    #[error("{path}:{line}: element {value} does not exceed previous element {previous}")]
    NonAscending {
        path: PathBuf,
        line: usize,
        previous: u64,
        value: u64,
    },

    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("die must have at least 2 faces, got {0}")]
    InvalidFaces(u32),

    #[error("cutoff {cutoff} is smaller than the start state {start}")]
    CutoffTooSmall { cutoff: u64, start: u64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid bounds for order {order}: lower {lower} must be nonnegative and below upper {upper}")]
    InvalidBounds {
        order: usize,
        lower: String,
        upper: String,
    },

    #[error("lower endpoint exceeds upper endpoint")]
    InvalidEnclosure,

    #[error("tail terms are not decreasing past split point {split}; choose a larger split point")]
    MonotonicityViolation { split: u64 },

    #[error("tail closure ratio {ratio} is not below 1")]
    RatioNotContracting { ratio: String },

    #[error("boundary certificates are only available for the primes, not {0}")]
    UnsupportedTarget(String),

    #[error("target set has no block of {faces} consecutive elements up to {horizon}")]
    NoAbsorbingBlock { faces: u32, horizon: u64 },

    #[error("path enumeration horizon {distance} exceeds the limit {limit}")]
    HorizonTooLarge { distance: u64, limit: u64 },
}

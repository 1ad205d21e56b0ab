use thiserror::Error;

use crate::spectral::GapReport;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid material: {0}")]
    InvalidMaterial(String),
    #[error("material regions {0} and {1} overlap")]
    OverlappingRegions(usize, usize),
    #[error("material region {0} lies outside the grid")]
    RegionOutOfBounds(usize),
    #[error("invalid layer partition: {0}")]
    InvalidPartition(String),
    #[error("invalid element: {0}")]
    InvalidElement(String),
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("no eigenvalue gap found (best ratio {:.3e})", .0.ratio)]
    NoGap(Box<GapReport>),
    #[error("nullspace dimension {found} disagrees with gradient-count oracle {expected}")]
    NullspaceMismatch { found: usize, expected: usize },
    #[error("row restriction of layer {layer} dropped rank from {expected} to {rank}")]
    RankDrop { layer: usize, expected: usize, rank: usize },
    #[error("frequency is too close to resonance (eigenvalue {0:.6e})")]
    Resonance(f64),
    #[error("singular matrix")]
    Singular,
    #[error("singular diagonal block at layer {0}")]
    SingularBlock(usize),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("zero reference norm")]
    ZeroReference,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

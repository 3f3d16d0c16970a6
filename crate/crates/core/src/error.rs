use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("word reduces to the identity")]
    TrivialWord,
    #[error("rank mismatch: {left} vs {right}")]
    RankMismatch { left: usize, right: usize },
    #[error("generator index {index} out of range for rank {rank}")]
    GeneratorOutOfRange { index: usize, rank: usize },
    #[error("image of generator {0} is trivial or not reduced")]
    BadImage(usize),
    #[error("supplied inverse does not invert the automorphism (generator {0})")]
    InvalidInverse(usize),
    #[error("broken edge path at position {0}")]
    BrokenPath(usize),
    #[error("edge image does not start with the edge itself")]
    ShapeMismatch,
    #[error("filtration rejected: {0}")]
    InvalidFiltration(String),
    #[error("no convergence within {0} refinement passes")]
    NonConvergence(usize),
    #[error("symbol budget of {0} exceeded")]
    LengthCap(u64),
    #[error("matrix is not irreducible")]
    NotIrreducible,
    #[error("no stabilizing power up to {cap}; oscillating letters {letters:?}")]
    CapExceeded { cap: usize, letters: Vec<usize> },
    #[error("spectral frequency requested outside a dominant primitive block")]
    NonDominant,
    #[error("order mismatch: {0} vs {1}")]
    OrderMismatch(usize, usize),
    #[error("image circuit collapsed to a point")]
    TrivialImage,
    #[error("splitting-unit alphabet could not be fully enumerated")]
    UnverifiedAlphabet,
    #[error("invalid substitution: {0}")]
    InvalidSubstitution(String),
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("maps are not inverse on conjugacy classes (circuit {0})")]
    NotInversePair(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;

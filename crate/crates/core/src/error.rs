use thiserror::Error;

use crate::tree::CellType;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid node index {0}: heap indices start at 1")]
    InvalidNode(u64),

    #[error("generation {requested} is beyond the forest depth {depth}")]
    OutOfRange { requested: u32, depth: u32 },

    #[error("tree {tree}: node {node} is observed but its parent is not")]
    NonHereditary { tree: usize, node: u64 },

    #[error("tree {tree}: node {node} appears more than once")]
    DuplicateNode { tree: usize, node: u64 },

    #[error("tree {tree} has no observed root")]
    MissingRoot { tree: usize },

    #[error("tree {tree}: values must be given for every node or for none")]
    MixedValues { tree: usize },

    #[error("invalid forest: {0}")]
    InvalidForest(String),

    #[error("invalid reproduction law: {0}")]
    InvalidLaw(String),

    #[error("invalid noise parameters: {0}")]
    InvalidNoise(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dominant left eigenvector is not unique for this descendants matrix")]
    DegenerateEigenvector,

    #[error("no observed mother cells in the requested generations")]
    ForestExtinct,

    #[error("forest carries no measured values")]
    NoValues,

    #[error("normal equations are rank deficient for {0:?} daughters")]
    RankDeficient(CellType),

    #[error("no observed {0:?} daughters")]
    InsufficientType(CellType),

    #[error("no jointly observed sister pairs")]
    InsufficientPairs,

    #[error("estimated trace/determinant give a non-positive discriminant")]
    DegenerateDiscriminant,

    #[error("degenerate variance: {0}")]
    DegenerateVariance(&'static str),

    #[error("matrix is not positive semi-definite")]
    NotPsd,

    #[error("matrix is singular")]
    Singular,

    #[error("dominant eigenvalue {0} is not above 1")]
    Subcritical(f64),

    #[error("autoregressive slopes must satisfy |b| < 1")]
    Unstable,

    #[error("fixed point undefined: a slope estimate is within 1e-9 of 1")]
    FixedPointUndefined,

    #[error("no coefficient estimate supplied for mother generation {0}")]
    MissingGeneration(u32),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("line {line}: {msg}")]
    Format { line: u64, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Errors that come from the statistics being undefined on otherwise
    /// valid data, as opposed to malformed input.
    pub fn is_degenerate(&self) -> bool {
        matches!(
            self,
            Error::DegenerateEigenvector
                | Error::ForestExtinct
                | Error::RankDeficient(_)
                | Error::InsufficientType(_)
                | Error::InsufficientPairs
                | Error::DegenerateDiscriminant
                | Error::DegenerateVariance(_)
                | Error::NotPsd
                | Error::Singular
                | Error::Subcritical(_)
                | Error::Unstable
                | Error::FixedPointUndefined
        )
    }
}

use thiserror::Error;

/// Errors produced by the constructions and checks in this crate.
///
/// Symbols and column indices carried in variants are 1-based, matching the
/// external word notation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("transition matrix must be square: row {row} has {len} entries, expected {k}")]
    NotSquare { row: usize, len: usize, k: usize },

    #[error("alphabet must contain at least one symbol")]
    EmptyAlphabet,

    #[error("alphabet size {0} exceeds the supported maximum of 255")]
    AlphabetTooLarge(usize),

    #[error("column {0} of the transition matrix has no nonzero entry")]
    ZeroColumn(usize),

    #[error("transition matrix entry ({row},{col}) is {value}, expected 0 or 1")]
    NonBinaryEntry { row: usize, col: usize, value: f64 },

    #[error("symbol {symbol} is outside the alphabet 1..={k}")]
    InvalidSymbol { symbol: usize, k: usize },

    #[error("words must contain at least one symbol")]
    EmptyWord,

    #[error("word {0} is not admissible")]
    InadmissibleWord(String),

    #[error("word {word} is shorter than the function depth {depth}")]
    WordTooShort { word: String, depth: usize },

    #[error("cannot lower depth from {from} to {to}")]
    DepthDowngrade { from: usize, to: usize },

    #[error("depth {actual} is too shallow, at least {required} is needed")]
    DepthTooShallow { required: usize, actual: usize },

    #[error("weight is negative ({value}) on word {word}")]
    NegativeWeight { word: String, value: f64 },

    #[error("negative mass {value} on word {word}")]
    NegativeMass { word: String, value: f64 },

    #[error("expected {expected} values for depth {depth}, got {actual}")]
    LengthMismatch { depth: usize, expected: usize, actual: usize },

    #[error("operands are defined over different subshifts")]
    ShiftMismatch,

    #[error("weight is not sub-normalized: sup R_V(1) = {sup}")]
    NotSubNormalized { sup: f64 },

    #[error("weight does not satisfy R_W(1) = 1 (max deviation {deviation})")]
    NotNormalizedWeight { deviation: f64 },

    #[error("no convergence after {iterations} iterations (last residual {residual})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("monotonicity violated at iteration {iteration}: increase of {excess} on word {word}")]
    MonotonicityViolation {
        iteration: usize,
        word: String,
        excess: f64,
    },

    #[error("fixed function h_V vanishes identically")]
    DegenerateH,

    #[error(
        "iterate mass collapsed to {mass} at iteration {iteration} \
         (normalized fixed-point residual {normalized_residual})"
    )]
    MassCollapse {
        iteration: usize,
        mass: f64,
        normalized_residual: f64,
    },

    #[error("measure is not a fixed point of T_V (residual {residual})")]
    NotFixedPoint { residual: f64 },

    #[error("cylinder {word} has zero mass at level {level}; cannot condition on it")]
    ZeroMassConditioning { word: String, level: usize },

    #[error("|m|^2 differs from V by {deviation}")]
    FilterMismatch { deviation: f64 },

    #[error("measure has mass on a cylinder {word} of zero reference mass")]
    NotAbsolutelyContinuous { word: String },

    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;

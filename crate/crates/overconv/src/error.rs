use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("not divisible: valuation {valuation} < {k}")]
    NotDivisible { valuation: u32, k: u32 },
    #[error("not a unit (valuation {valuation:?})")]
    NotAUnit { valuation: Option<u32> },
    #[error("not invertible: {0}")]
    NotInvertible(String),
    #[error("window overflow: {0}")]
    WindowOverflow(String),
    #[error("incompatible operands: {0}")]
    Incompatible(String),
    #[error("decomposition overflow: {0}")]
    DecompositionOverflow(String),
    #[error("zero input")]
    ZeroInput,
    #[error("level cap {cap} exceeded")]
    LevelCapExceeded { cap: u32 },
    #[error("not Eisenstein: {0}")]
    NotEisenstein(String),
    #[error("Newton iteration stalled after {iterations} steps (residual valuation {residual})")]
    NewtonStall { iterations: usize, residual: String },
    #[error("not in the plus part: {0}")]
    NotPlusPart(String),
    #[error("evaluation diverges: {0}")]
    EvaluationDiverges(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("malformed input: {0}")]
    Parse(String),
}

impl Error {
    /// Short machine-readable tag used in JSON error objects.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidConfig(_) => "invalid_config",
            Error::NotDivisible { .. } => "not_divisible",
            Error::NotAUnit { .. } => "not_a_unit",
            Error::NotInvertible(_) => "not_invertible",
            Error::WindowOverflow(_) => "window_overflow",
            Error::Incompatible(_) => "incompatible",
            Error::DecompositionOverflow(_) => "decomposition_overflow",
            Error::ZeroInput => "zero_input",
            Error::LevelCapExceeded { .. } => "level_cap_exceeded",
            Error::NotEisenstein(_) => "not_eisenstein",
            Error::NewtonStall { .. } => "newton_stall",
            Error::NotPlusPart(_) => "not_plus_part",
            Error::EvaluationDiverges(_) => "evaluation_diverges",
            Error::Unsupported(_) => "unsupported",
            Error::Parse(_) => "parse",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

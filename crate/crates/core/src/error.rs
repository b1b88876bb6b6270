use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("factor index {index} out of range for a space with {n_factors} factors")]
    FactorOutOfRange { index: usize, n_factors: usize },

    #[error("index {0} listed more than once")]
    DuplicateIndex(usize),

    #[error("partial trace needs at least one kept factor; use `trace()` for the scalar")]
    EmptyKeep,

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid density operator: {0}")]
    InvalidDensity(String),

    #[error("eigenvalue {0:e} is below the clipping threshold")]
    NegativeEigenvalue(f64),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension {dim} exceeds the dense limit {limit}")]
    TooLarge { dim: usize, limit: usize },

    #[error("circuit acts on {circuit} modes but the register has {register}")]
    ModeCountMismatch { circuit: usize, register: usize },

    #[error("typical set is empty (N = {n_modes}, delta = {delta}, H = {entropy} bits)")]
    EmptyTypicalSet { n_modes: usize, delta: f64, entropy: f64 },

    #[error("decoupling violated: ||rho_RE - rho_R (x) rho_E||_1 = {violation:e} exceeds {tolerance:e}")]
    DecouplingViolated { violation: f64, tolerance: f64 },

    #[error("sinh^2(r0) = {found} but K sinh^2(r) / N = {expected}")]
    InconsistentSqueezing { found: f64, expected: f64 },

    #[error("serialization failed: {0}")]
    Serialization(String),

    #[error("bound forms disagree: {first} vs {second}")]
    InconsistentBound { first: f64, second: f64 },
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name, reason: reason.into() }
}

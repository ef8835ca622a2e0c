use thiserror::Error;

pub type Result<T> = std::result::Result<T, QuantumError>;

/// One failed channel of a multi-channel measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelFailure {
    pub label: String,
    pub error: QuantumError,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuantumError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid dimension {0}: at least 2 required")]
    InvalidDimension(usize),

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("state is not normalized (norm deviation {deviation:e})")]
    NotNormalized { deviation: f64 },

    #[error("vectors are not orthonormal (max deviation {deviation:e})")]
    NotOrthonormal { deviation: f64 },

    #[error("matrix is not Hermitian (max |H - H^dagger| = {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("matrix is not unitary (max |U U^dagger - 1| = {deviation:e})")]
    NotUnitary { deviation: f64 },

    #[error("degenerate spectrum: eigenvalue gap {gap:e} below {threshold:e}")]
    DegenerateSpectrum { gap: f64, threshold: f64 },

    #[error("eigendecomposition did not converge")]
    NoConvergence,

    #[error("post-selected state is orthogonal to the initial state (|<m|psi>| = {overlap:e})")]
    OrthogonalPostselection { overlap: f64 },

    #[error("basis pair (a={a}, b={b}) is orthogonal (|<b|a>| = {overlap:e})")]
    OrthogonalBasisPair { a: usize, b: usize, overlap: f64 },

    #[error("{context}: expected a real value, imaginary residue {residue:e}")]
    NotReal { context: &'static str, residue: f64 },

    #[error("pointer displacement {displacement} exceeds a quarter of the grid extent ({limit})")]
    GridTooCoarse { displacement: f64, limit: f64 },

    #[error("invalid pointer model: {0}")]
    InvalidPointer(String),

    #[error("truncation violated: population {population:e} above level {level}")]
    TruncationViolated { population: f64, level: usize },

    #[error("kernel width {width} is below the minimum {minimum} (two lattice spacings)")]
    KernelTooNarrow { width: f64, minimum: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{} channel(s) failed: {}", .0.len(), format_channels(.0))]
    ChannelFailures(Vec<ChannelFailure>),
}

fn format_channels(failures: &[ChannelFailure]) -> String {
    failures
        .iter()
        .map(|f| format!("[{}] {}", f.label, f.error))
        .collect::<Vec<_>>()
        .join("; ")
}

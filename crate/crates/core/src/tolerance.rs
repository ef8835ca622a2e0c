/// Numerical thresholds shared by every module.
///
/// Identity checks run at `identity`, pure rearrangements of the same
/// floating-point products at `exact`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Euclidean norm of a [`StateVector`](crate::StateVector) around 1.
    pub normalization: f64,
    /// Element-wise deviation of a Gram matrix from the identity.
    pub orthonormality: f64,
    pub hermiticity: f64,
    pub unitarity: f64,
    /// Smallest eigenvalue gap accepted without the degenerate opt-in.
    pub degeneracy_gap: f64,
    /// Overlap modulus below which a post-selection or basis pair counts as orthogonal.
    pub overlap: f64,
    /// Post-selection probability below which a pointer run needs the rare opt-in.
    pub postselection_probability: f64,
    pub identity: f64,
    pub exact: f64,
    /// Imaginary residue tolerated on quantities that are real in exact arithmetic.
    pub real_residue: f64,
}

impl Tolerances {
    pub const DEFAULT: Tolerances = Tolerances {
        normalization: 1e-12,
        orthonormality: 1e-10,
        hermiticity: 1e-10,
        unitarity: 1e-10,
        degeneracy_gap: 1e-9,
        overlap: 1e-12,
        postselection_probability: 1e-12,
        identity: 1e-10,
        exact: 1e-12,
        real_residue: 1e-10,
    };
}

impl Default for Tolerances {
    fn default() -> Self {
        Self::DEFAULT
    }
}

//! Complex quasiprobability statistics on finite-dimensional Hilbert spaces.
//!
//! The crate is organised bottom-up:
//!
//! - [`hilbert`]: states, orthonormal bases, Hermitian observables with explicit
//!   spectral decompositions, unitaries and the elementary algebra on them.
//! - [`quasiprob`]: weak values, Kirkwood-Dirac joint distributions, complex
//!   conditional probabilities and the operator identities built from them.
//! - [`weakmeas`]: a discretised Gaussian pointer that measures weak values and
//!   Kirkwood-Dirac distributions at finite coupling, exactly or by sampling.
//! - [`dynamics`]: Heisenberg-picture evolution, the equation-of-motion identity,
//!   two-time correlations and the lattice free-particle propagator.
//! - [`random`]: seeded generators for random unitaries, states, bases and
//!   observables used by property sweeps.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod dynamics;
pub mod error;
pub mod hilbert;
pub mod quasiprob;
pub mod random;
pub mod tolerance;
pub mod weakmeas;

pub use error::{QuantumError, Result};
pub use hilbert::{
    commutator, evolve, evolve_heisenberg, expectation, spectral_decompose,
    spectral_decompose_with, CMatrix, CVector, Degeneracy, Observable, OrthonormalBasis,
    StateVector, UnitaryMap, C64,
};
pub use tolerance::Tolerances;

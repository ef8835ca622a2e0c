//! Finite-dimensional Hilbert-space substrate.
//!
//! Every value here is validated on construction and immutable afterwards.
//! Matrices are dense `nalgebra` matrices over `Complex<f64>`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
pub use num_complex::Complex64 as C64;

use crate::error::{QuantumError, Result};
use crate::tolerance::Tolerances;

pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

const TOL: Tolerances = Tolerances::DEFAULT;

/// Largest element-wise modulus of `a - b`.
pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

pub fn hermiticity_deviation(m: &CMatrix) -> f64 {
    max_abs_diff(m, &m.adjoint())
}

fn check_square(m: &CMatrix) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(QuantumError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    if m.nrows() < 2 {
        return Err(QuantumError::InvalidDimension(m.nrows()));
    }
    Ok(m.nrows())
}

fn check_dims(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(QuantumError::DimensionMismatch { expected, found })
    }
}

/// Normalized pure state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amplitudes: CVector,
}

impl StateVector {
    /// Wraps amplitudes whose Euclidean norm is already 1 within 1e-12.
    pub fn new(amplitudes: Vec<C64>) -> Result<Self> {
        Self::from_vector(CVector::from_vec(amplitudes))
    }

    pub fn from_vector(amplitudes: CVector) -> Result<Self> {
        if amplitudes.len() < 2 {
            return Err(QuantumError::InvalidDimension(amplitudes.len()));
        }
        let deviation = (amplitudes.norm() - 1.0).abs();
        if !(deviation <= TOL.normalization) {
            return Err(QuantumError::NotNormalized { deviation });
        }
        Ok(Self { amplitudes })
    }

    /// Rescales arbitrary non-zero amplitudes to unit norm.
    pub fn normalized(amplitudes: Vec<C64>) -> Result<Self> {
        Self::normalize_vector(CVector::from_vec(amplitudes))
    }

    pub fn normalize_vector(amplitudes: CVector) -> Result<Self> {
        if amplitudes.len() < 2 {
            return Err(QuantumError::InvalidDimension(amplitudes.len()));
        }
        let norm = amplitudes.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(QuantumError::NotNormalized {
                deviation: (norm - 1.0).abs(),
            });
        }
        Ok(Self {
            amplitudes: amplitudes.unscale(norm),
        })
    }

    /// Computational basis state `|index⟩`.
    pub fn basis_state(dim: usize, index: usize) -> Result<Self> {
        if dim < 2 {
            return Err(QuantumError::InvalidDimension(dim));
        }
        if index >= dim {
            return Err(QuantumError::InvalidParameter(format!(
                "basis index {index} out of range for dimension {dim}"
            )));
        }
        let mut v = CVector::zeros(dim);
        v[index] = C64::new(1.0, 0.0);
        Ok(Self { amplitudes: v })
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> C64 {
        self.amplitudes.dotc(&other.amplitudes)
    }

    /// Population of the components with index `>= level`.
    pub fn population_from(&self, level: usize) -> f64 {
        self.amplitudes
            .iter()
            .skip(level)
            .map(|c| c.norm_sqr())
            .sum()
    }
}

/// Ordered orthonormal basis, stored as the columns of a square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthonormalBasis {
    vectors: CMatrix,
}

impl OrthonormalBasis {
    pub fn from_columns(vectors: CMatrix) -> Result<Self> {
        let dim = check_square(&vectors)?;
        let gram = vectors.adjoint() * &vectors;
        let deviation = max_abs_diff(&gram, &CMatrix::identity(dim, dim));
        if !(deviation <= TOL.orthonormality) {
            return Err(QuantumError::NotOrthonormal { deviation });
        }
        Ok(Self { vectors })
    }

    pub fn from_vectors(vectors: &[StateVector]) -> Result<Self> {
        let dim = vectors.first().map(StateVector::dim).unwrap_or(0);
        for v in vectors {
            check_dims(dim, v.dim())?;
        }
        check_dims(dim, vectors.len())?;
        let columns: Vec<CVector> = vectors.iter().map(|v| v.amplitudes.clone()).collect();
        Self::from_columns(CMatrix::from_columns(&columns))
    }

    pub fn computational(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(QuantumError::InvalidDimension(dim));
        }
        Ok(Self {
            vectors: CMatrix::identity(dim, dim),
        })
    }

    /// Discrete Fourier basis, `|k⟩ = d^{-1/2} Σ_j e^{2πi jk/d} |j⟩`.
    pub fn fourier(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(QuantumError::InvalidDimension(dim));
        }
        let scale = 1.0 / (dim as f64).sqrt();
        let vectors = CMatrix::from_fn(dim, dim, |j, k| {
            let phase = 2.0 * std::f64::consts::PI * ((j * k) % dim) as f64 / dim as f64;
            C64::from_polar(scale, phase)
        });
        Self::from_columns(vectors)
    }

    pub fn dim(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.vectors
    }

    /// The `k`-th basis vector as a state.
    pub fn vector(&self, k: usize) -> StateVector {
        StateVector::normalize_vector(self.vectors.column(k).into_owned())
            .expect("columns of an orthonormal basis have unit norm")
    }

    pub fn vectors(&self) -> impl Iterator<Item = StateVector> + '_ {
        (0..self.dim()).map(move |k| self.vector(k))
    }

    /// `G[j, k] = ⟨self_j|other_k⟩`.
    pub fn overlaps(&self, other: &OrthonormalBasis) -> Result<CMatrix> {
        check_dims(self.dim(), other.dim())?;
        Ok(self.vectors.adjoint() * &other.vectors)
    }

    /// Coefficients `⟨k|ψ⟩` of a state in this basis.
    pub fn coefficients(&self, psi: &StateVector) -> Result<CVector> {
        check_dims(self.dim(), psi.dim())?;
        Ok(self.vectors.adjoint() * &psi.amplitudes)
    }

    /// Born probabilities `|⟨k|ψ⟩|²`.
    pub fn born_probabilities(&self, psi: &StateVector) -> Result<Vec<f64>> {
        Ok(self.coefficients(psi)?.iter().map(|c| c.norm_sqr()).collect())
    }

    /// Element-wise deviation of the Gram matrix from the identity.
    pub fn orthonormality_deviation(&self) -> f64 {
        let d = self.dim();
        max_abs_diff(&(self.vectors.adjoint() * &self.vectors), &CMatrix::identity(d, d))
    }
}

/// Whether a decomposition may contain eigenvalues closer than the degeneracy gap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Degeneracy {
    /// Fail with [`QuantumError::DegenerateSpectrum`].
    #[default]
    Forbid,
    /// Accept; only projector-consuming operations should use such observables.
    Allow,
}

/// Hermitian matrix together with its spectral decomposition.
///
/// Eigenvalues are sorted ascending; each eigenvector has its largest-modulus
/// component real and positive.
#[derive(Debug, Clone, PartialEq)]
pub struct Observable {
    matrix: CMatrix,
    eigenvalues: Vec<f64>,
    eigenbasis: OrthonormalBasis,
}

/// Decomposes a Hermitian matrix, rejecting degenerate spectra.
pub fn spectral_decompose(h: &CMatrix, tol: f64) -> Result<Observable> {
    spectral_decompose_with(h, tol, Degeneracy::Forbid)
}

pub fn spectral_decompose_with(h: &CMatrix, tol: f64, degeneracy: Degeneracy) -> Result<Observable> {
    check_square(h)?;
    let deviation = hermiticity_deviation(h);
    if !(deviation <= tol) {
        return Err(QuantumError::NotHermitian { deviation });
    }
    let hermitian_part = (h + h.adjoint()).unscale(2.0);
    let eigen = SymmetricEigen::try_new(hermitian_part, f64::EPSILON, 0)
        .ok_or(QuantumError::NoConvergence)?;
    let basis = OrthonormalBasis::from_columns(eigen.eigenvectors)?;
    let mut observable = Observable::assemble(eigen.eigenvalues.iter().copied().collect(), basis);
    observable.matrix = h.clone();
    observable.check_degeneracy(degeneracy)?;
    Ok(observable)
}

/// Scales a vector so that its largest-modulus component is real and positive.
///
/// Ties within a relative 1e-9 go to the lowest index.
fn fix_phase(column: &mut CVector) {
    let max = column.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if max == 0.0 {
        return;
    }
    let pivot = column
        .iter()
        .position(|c| c.norm() >= max * (1.0 - 1e-9))
        .expect("maximum is attained");
    let phase = column[pivot].conj() / column[pivot].norm();
    column.iter_mut().for_each(|c| *c *= phase);
}

impl Observable {
    /// Sorts, phase-fixes and rebuilds the matrix `Σ_k λ_k |k⟩⟨k|`.
    fn assemble(eigenvalues: Vec<f64>, basis: OrthonormalBasis) -> Self {
        let dim = basis.dim();
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&i, &j| eigenvalues[i].total_cmp(&eigenvalues[j]));
        let sorted: Vec<f64> = order.iter().map(|&i| eigenvalues[i]).collect();
        let columns: Vec<CVector> = order
            .iter()
            .map(|&i| {
                let mut col = basis.vectors.column(i).into_owned();
                fix_phase(&mut col);
                col
            })
            .collect();
        let vectors = CMatrix::from_columns(&columns);
        let diag = CMatrix::from_diagonal(&CVector::from_iterator(
            dim,
            sorted.iter().map(|&l| C64::new(l, 0.0)),
        ));
        let matrix = &vectors * diag * vectors.adjoint();
        Self {
            matrix,
            eigenvalues: sorted,
            eigenbasis: OrthonormalBasis { vectors },
        }
    }

    /// Builds `Σ_k λ_k |k⟩⟨k|` from a known spectrum, without diagonalizing.
    pub fn from_spectrum(
        eigenvalues: Vec<f64>,
        basis: OrthonormalBasis,
        degeneracy: Degeneracy,
    ) -> Result<Self> {
        check_dims(basis.dim(), eigenvalues.len())?;
        if let Some(bad) = eigenvalues.iter().find(|l| !l.is_finite()) {
            return Err(QuantumError::InvalidParameter(format!(
                "non-finite eigenvalue {bad}"
            )));
        }
        let observable = Self::assemble(eigenvalues, basis);
        observable.check_degeneracy(degeneracy)?;
        Ok(observable)
    }

    /// Rank-one projector onto `basis[k]`, as a (degenerate) observable.
    pub fn projector(basis: &OrthonormalBasis, k: usize) -> Result<Self> {
        if k >= basis.dim() {
            return Err(QuantumError::InvalidParameter(format!(
                "projector index {k} out of range for dimension {}",
                basis.dim()
            )));
        }
        let eigenvalues = (0..basis.dim())
            .map(|j| if j == k { 1.0 } else { 0.0 })
            .collect();
        Self::from_spectrum(eigenvalues, basis.clone(), Degeneracy::Allow)
    }

    fn check_degeneracy(&self, degeneracy: Degeneracy) -> Result<()> {
        match degeneracy {
            Degeneracy::Allow => Ok(()),
            Degeneracy::Forbid => self.require_nondegenerate(),
        }
    }

    /// Fails unless every eigenvalue gap is at least the degeneracy threshold.
    pub fn require_nondegenerate(&self) -> Result<()> {
        let gap = self.min_gap();
        if gap < TOL.degeneracy_gap {
            return Err(QuantumError::DegenerateSpectrum {
                gap,
                threshold: TOL.degeneracy_gap,
            });
        }
        Ok(())
    }

    pub fn min_gap(&self) -> f64 {
        self.eigenvalues
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenbasis(&self) -> &OrthonormalBasis {
        &self.eigenbasis
    }

    /// Element-wise deviation between the matrix and `Σ_k λ_k P_k`.
    pub fn reconstruction_error(&self) -> f64 {
        let v = &self.eigenbasis.vectors;
        let diag = CMatrix::from_diagonal(&CVector::from_iterator(
            self.dim(),
            self.eigenvalues.iter().map(|&l| C64::new(l, 0.0)),
        ));
        max_abs_diff(&self.matrix, &(v * diag * v.adjoint()))
    }

    pub fn largest_magnitude(&self) -> f64 {
        self.eigenvalues.iter().map(|l| l.abs()).fold(0.0, f64::max)
    }
}

/// `⟨ψ|A|ψ⟩`.
pub fn expectation(a: &Observable, psi: &StateVector) -> Result<f64> {
    check_dims(a.dim(), psi.dim())?;
    let value = psi.amplitudes.dotc(&(&a.matrix * &psi.amplitudes));
    debug_assert!(
        value.im.abs() < TOL.real_residue * (1.0 + a.largest_magnitude()),
        "expectation of a Hermitian operator has imaginary residue {}",
        value.im
    );
    Ok(value.re)
}

/// `AB - BA`.
pub fn commutator(a: &Observable, b: &Observable) -> Result<CMatrix> {
    check_dims(a.dim(), b.dim())?;
    Ok(&a.matrix * &b.matrix - &b.matrix * &a.matrix)
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryMap {
    matrix: CMatrix,
}

impl UnitaryMap {
    pub fn from_matrix(matrix: CMatrix) -> Result<Self> {
        let dim = check_square(&matrix)?;
        let deviation = max_abs_diff(&(&matrix * matrix.adjoint()), &CMatrix::identity(dim, dim));
        if !(deviation <= TOL.unitarity) {
            return Err(QuantumError::NotUnitary { deviation });
        }
        Ok(Self { matrix })
    }

    pub fn identity(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(QuantumError::InvalidDimension(dim));
        }
        Ok(Self {
            matrix: CMatrix::identity(dim, dim),
        })
    }

    /// `exp(-i θ G) = Σ_k e^{-i θ g_k} |k⟩⟨k|`, evaluated on the spectral decomposition of `G`.
    pub fn from_generator(generator: &Observable, theta: f64) -> Self {
        let v = generator.eigenbasis.matrix();
        let phases = CVector::from_iterator(
            generator.dim(),
            generator
                .eigenvalues
                .iter()
                .map(|&g| C64::from_polar(1.0, -theta * g)),
        );
        Self {
            matrix: v * CMatrix::from_diagonal(&phases) * v.adjoint(),
        }
    }

    /// `exp(-i H t / ħ)`.
    pub fn evolution(hamiltonian: &Observable, t: f64, hbar: f64) -> Self {
        Self::from_generator(hamiltonian, t / hbar)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn adjoint(&self) -> Self {
        Self {
            matrix: self.matrix.adjoint(),
        }
    }

    pub fn unitarity_deviation(&self) -> f64 {
        let d = self.dim();
        max_abs_diff(&(&self.matrix * self.matrix.adjoint()), &CMatrix::identity(d, d))
    }
}

/// Schrödinger picture: `U|ψ⟩`.
pub fn evolve(u: &UnitaryMap, psi: &StateVector) -> Result<StateVector> {
    check_dims(u.dim(), psi.dim())?;
    StateVector::normalize_vector(&u.matrix * &psi.amplitudes)
}

/// Heisenberg picture: `U† A U`, with eigenvectors `U†|a⟩` and the same eigenvalues.
pub fn evolve_heisenberg(u: &UnitaryMap, a: &Observable) -> Result<Observable> {
    check_dims(u.dim(), a.dim())?;
    let u_dag = u.matrix.adjoint();
    let matrix = &u_dag * &a.matrix * &u.matrix;
    let mut columns: Vec<CVector> = (0..a.dim())
        .map(|k| &u_dag * a.eigenbasis.vectors.column(k))
        .collect();
    columns.iter_mut().for_each(fix_phase);
    Ok(Observable {
        matrix,
        eigenvalues: a.eigenvalues.clone(),
        eigenbasis: OrthonormalBasis {
            vectors: CMatrix::from_columns(&columns),
        },
    })
}

/// Qubit operators and states used throughout tests and bundled scenarios.
pub mod qubit {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    pub fn pauli_x() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)])
    }

    pub fn pauli_y() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)])
    }

    pub fn pauli_z() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)])
    }

    pub fn observable(matrix: &CMatrix) -> Observable {
        spectral_decompose(matrix, TOL.hermiticity).expect("Pauli matrices are non-degenerate")
    }

    /// `(a|0⟩ + b|1⟩)` normalized.
    pub fn state(a: C64, b: C64) -> StateVector {
        StateVector::normalized(vec![a, b]).expect("non-zero qubit state")
    }

    pub fn zero() -> StateVector {
        state(c(1., 0.), c(0., 0.))
    }

    pub fn one() -> StateVector {
        state(c(0., 0.), c(1., 0.))
    }

    /// `(|0⟩ + i|1⟩)/√2`.
    pub fn plus_i() -> StateVector {
        state(c(1., 0.), c(0., 1.))
    }

    /// `{|0⟩, |1⟩}`.
    pub fn z_basis() -> OrthonormalBasis {
        OrthonormalBasis::computational(2).unwrap()
    }

    /// `{|+⟩, |−⟩}`.
    pub fn x_basis() -> OrthonormalBasis {
        OrthonormalBasis::from_vectors(&[state(c(1., 0.), c(1., 0.)), state(c(1., 0.), c(-1., 0.))])
            .unwrap()
    }

    /// `{|+i⟩, |−i⟩}`.
    pub fn y_basis() -> OrthonormalBasis {
        OrthonormalBasis::from_vectors(&[state(c(1., 0.), c(0., 1.)), state(c(1., 0.), c(0., -1.))])
            .unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::qubit::*;
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn identity_is_degenerate() {
        let err = spectral_decompose(&CMatrix::identity(2, 2), 1e-10).unwrap_err();
        assert!(matches!(err, QuantumError::DegenerateSpectrum { .. }));
        let allowed =
            spectral_decompose_with(&CMatrix::identity(2, 2), 1e-10, Degeneracy::Allow).unwrap();
        assert_eq!(allowed.eigenvalues(), &[1.0, 1.0]);
    }

    #[test]
    fn non_hermitian_rejected() {
        let m = CMatrix::from_row_slice(2, 2, &[c(1., 0.), c(1., 0.), c(0., 0.), c(1., 0.)]);
        let err = spectral_decompose(&m, 1e-10).unwrap_err();
        assert!(matches!(err, QuantumError::NotHermitian { deviation } if deviation == 1.0));
    }

    #[test]
    fn pauli_z_decomposition() {
        let z = observable(&pauli_z());
        assert_eq!(z.eigenvalues(), &[-1.0, 1.0]);
        let basis = z.eigenbasis().matrix();
        assert_abs_diff_eq!(basis[(1, 0)].re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(basis[(0, 1)].re, 1.0, epsilon = 1e-15);
        assert!(basis[(0, 0)].norm() < 1e-15 && basis[(1, 1)].norm() < 1e-15);
    }

    #[test]
    fn pauli_x_decomposition() {
        let x = observable(&pauli_x());
        // characteristic polynomial λ² - tr λ + det = 0
        let m = pauli_x();
        let tr = (m[(0, 0)] + m[(1, 1)]).re;
        let det = (m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]).re;
        let disc = (tr * tr - 4.0 * det).sqrt();
        let roots = [(tr - disc) / 2.0, (tr + disc) / 2.0];
        assert_abs_diff_eq!(x.eigenvalues()[0], roots[0], epsilon = 1e-14);
        assert_abs_diff_eq!(x.eigenvalues()[1], roots[1], epsilon = 1e-14);
        assert!(x.reconstruction_error() < 1e-14);

        let s = std::f64::consts::FRAC_1_SQRT_2;
        let v = x.eigenbasis().matrix();
        // (|0⟩ - |1⟩)/√2 for -1, (|0⟩ + |1⟩)/√2 for +1
        for (got, want) in v.iter().zip([s, -s, s, s]) {
            assert!((got - c(want, 0.0)).norm() < 1e-14, "{got} vs {want}");
        }
    }

    #[test]
    fn phase_convention_picks_largest_component() {
        let m = CMatrix::from_row_slice(2, 2, &[c(2., 0.), c(0., 1.), c(0., -1.), c(-1., 0.)]);
        let obs = spectral_decompose(&m, 1e-10).unwrap();
        for col in obs.eigenbasis().matrix().column_iter() {
            let pivot = col.iter().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap();
            assert!(pivot.im.abs() < 1e-15 && pivot.re > 0.0);
        }
    }

    #[test]
    fn expectation_values() {
        let z = observable(&pauli_z());
        assert_eq!(expectation(&z, &zero()).unwrap(), 1.0);
        let plus = state(c(1., 0.), c(1., 0.));
        assert!(expectation(&z, &plus).unwrap().abs() < 1e-15);
        let id = spectral_decompose_with(&CMatrix::identity(3, 3), 1e-10, Degeneracy::Allow).unwrap();
        let psi = StateVector::normalized(vec![c(1., 2.), c(-0.5, 0.), c(0., 3.)]).unwrap();
        assert_abs_diff_eq!(expectation(&id, &psi).unwrap(), 1.0, epsilon = 1e-14);
        assert!(matches!(
            expectation(&z, &psi),
            Err(QuantumError::DimensionMismatch { expected: 2, found: 3 })
        ));
    }

    #[test]
    fn commutators() {
        let z = observable(&pauli_z());
        let x = observable(&pauli_x());
        assert!(commutator(&z, &z).unwrap().iter().all(|e| e.norm() < 1e-14));
        // [Z, X] = ZX - XZ, multiplied out by hand
        let zx = CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(-1., 0.), c(0., 0.)]);
        let expected = &zx - zx.transpose();
        let got = commutator(&z, &x).unwrap();
        assert!(max_abs_diff(&got, &expected) < 1e-14);
        assert!(max_abs_diff(&got, &(pauli_y() * c(0., 2.))) < 1e-14);
        assert!(max_abs_diff(&got, &(-got.adjoint())) < 1e-14);

        let d1 = observable(&CMatrix::from_diagonal(&CVector::from_vec(vec![c(1., 0.), c(2., 0.)])));
        let d2 = observable(&CMatrix::from_diagonal(&CVector::from_vec(vec![c(5., 0.), c(-3., 0.)])));
        assert!(commutator(&d1, &d2).unwrap().iter().all(|e| e.norm() == 0.0));
    }

    #[test]
    fn identity_evolution() {
        let u = UnitaryMap::identity(2).unwrap();
        let psi = plus_i();
        let out = evolve(&u, &psi).unwrap();
        assert!((out.amplitudes() - psi.amplitudes()).norm() < 1e-15);
        let x = observable(&pauli_x());
        let evolved = evolve_heisenberg(&u, &x).unwrap();
        assert_eq!(evolved.matrix(), x.matrix());
        assert_eq!(evolved.eigenvalues(), x.eigenvalues());
    }

    /// Truncated Taylor series, independent of the spectral route.
    fn expm_series(m: &CMatrix) -> CMatrix {
        let d = m.nrows();
        let mut term = CMatrix::identity(d, d);
        let mut sum = term.clone();
        for k in 1..60 {
            term = &term * m / C64::new(k as f64, 0.0);
            sum += &term;
        }
        sum
    }

    #[test]
    fn rotation_about_z_maps_x_to_y() {
        let theta = std::f64::consts::FRAC_PI_2;
        let z = observable(&pauli_z());
        let u = UnitaryMap::from_generator(&z, theta / 2.0);
        let oracle = expm_series(&(pauli_z() * c(0., -theta / 2.0)));
        assert!(max_abs_diff(u.matrix(), &oracle) < 1e-14);

        let evolved = evolve_heisenberg(&u, &observable(&pauli_x())).unwrap();
        let oracle_a = oracle.adjoint() * pauli_x() * &oracle;
        assert!(max_abs_diff(evolved.matrix(), &oracle_a) < 1e-14);
        // sign fixed by the oracle: U†XU = -Y for this rotation
        assert!(max_abs_diff(evolved.matrix(), &(-pauli_y())) < 1e-14);
        assert!(evolved.reconstruction_error() < 1e-14);
    }

    #[test]
    fn unitary_validation() {
        let m = CMatrix::from_row_slice(2, 2, &[c(1., 0.), c(1., 0.), c(0., 0.), c(1., 0.)]);
        assert!(matches!(UnitaryMap::from_matrix(m), Err(QuantumError::NotUnitary { .. })));
        assert!(UnitaryMap::from_matrix(pauli_y()).is_ok());
    }

    #[test]
    fn state_validation() {
        assert!(matches!(
            StateVector::new(vec![c(1., 0.), c(1., 0.)]),
            Err(QuantumError::NotNormalized { .. })
        ));
        assert!(matches!(
            StateVector::new(vec![c(1., 0.)]),
            Err(QuantumError::InvalidDimension(1))
        ));
        assert!(StateVector::normalized(vec![c(0., 0.), c(0., 0.)]).is_err());
        let bad = CMatrix::from_row_slice(2, 2, &[c(1., 0.), c(1., 0.), c(0., 0.), c(1., 0.)]);
        assert!(matches!(
            OrthonormalBasis::from_columns(bad),
            Err(QuantumError::NotOrthonormal { .. })
        ));
    }

    #[test]
    fn fourier_basis_is_orthonormal() {
        for d in [2, 3, 7, 16] {
            assert!(OrthonormalBasis::fourier(d).unwrap().orthonormality_deviation() < 1e-13);
        }
    }

    #[test]
    fn projector_observable() {
        let p = Observable::projector(&x_basis(), 0).unwrap();
        assert_eq!(p.eigenvalues(), &[0.0, 1.0]);
        let expected = CMatrix::from_element(2, 2, c(0.5, 0.));
        assert!(max_abs_diff(p.matrix(), &expected) < 1e-15);
        assert!(p.require_nondegenerate().is_ok());
        let p3 = Observable::projector(&OrthonormalBasis::computational(3).unwrap(), 1).unwrap();
        assert!(p3.require_nondegenerate().is_err());
    }
}

//! Seeded random instances for property sweeps.
//!
//! Unitaries are Haar distributed: a complex Gaussian matrix is QR-factorised
//! and the phases of `R`'s diagonal are moved into `Q`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::hilbert::{
    spectral_decompose, CMatrix, CVector, Observable, OrthonormalBasis, StateVector, UnitaryMap,
    C64,
};
use crate::tolerance::Tolerances;

/// Deterministic generator for a (seed, stream) pair.
pub fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im)
}

pub fn gaussian_matrix<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> CMatrix {
    CMatrix::from_fn(dim, dim, |_, _| gaussian(rng))
}

pub fn haar_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> UnitaryMap {
    let qr = gaussian_matrix(dim, rng).qr();
    let r = qr.r();
    let mut q = qr.q();
    for (k, mut col) in q.column_iter_mut().enumerate() {
        let d = r[(k, k)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { C64::new(1.0, 0.0) };
        col *= phase;
    }
    UnitaryMap::from_matrix(q).expect("QR factor of a Gaussian matrix is unitary")
}

pub fn random_state<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> StateVector {
    loop {
        let v = CVector::from_fn(dim, |_, _| gaussian(rng));
        if let Ok(s) = StateVector::normalize_vector(v) {
            return s;
        }
    }
}

pub fn random_basis<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> OrthonormalBasis {
    OrthonormalBasis::from_columns(haar_unitary(dim, rng).matrix().clone())
        .expect("columns of a unitary are orthonormal")
}

/// Random Hermitian matrix with standard-normal eigenvalues at least `min_gap` apart.
pub fn random_hermitian<R: Rng + ?Sized>(dim: usize, min_gap: f64, rng: &mut R) -> CMatrix {
    let eigenvalues = loop {
        let mut values: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        values.sort_by(f64::total_cmp);
        if values.windows(2).all(|w| w[1] - w[0] >= min_gap) {
            break values;
        }
    };
    let u = haar_unitary(dim, rng);
    let diag = CMatrix::from_diagonal(&CVector::from_iterator(
        dim,
        eigenvalues.iter().map(|&l| C64::new(l, 0.0)),
    ));
    let m = u.matrix() * diag * u.matrix().adjoint();
    (&m + m.adjoint()).unscale(2.0)
}

/// Random non-degenerate observable, decomposed numerically.
pub fn random_observable<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Observable {
    spectral_decompose(&random_hermitian(dim, 1e-3, rng), Tolerances::DEFAULT.hermiticity)
        .expect("random Hermitian matrix with separated spectrum")
}

/// A pair of bases obtained by applying small random unitaries to the
/// computational and Fourier bases, so every `|⟨b|a⟩|` stays near `1/√d`.
pub fn perturbed_mub_pair<R: Rng + ?Sized>(
    dim: usize,
    strength: f64,
    rng: &mut R,
) -> (OrthonormalBasis, OrthonormalBasis) {
    let a = small_unitary(dim, strength, rng).matrix().clone();
    let f = OrthonormalBasis::fourier(dim).expect("dimension checked by caller");
    let b = small_unitary(dim, strength, rng).matrix() * f.matrix();
    (
        OrthonormalBasis::from_columns(a).expect("unitary columns"),
        OrthonormalBasis::from_columns(b).expect("unitary columns"),
    )
}

/// `exp(-i ε G)` for a random Hermitian generator `G`.
pub fn small_unitary<R: Rng + ?Sized>(dim: usize, strength: f64, rng: &mut R) -> UnitaryMap {
    let g = random_observable(dim, rng);
    UnitaryMap::from_generator(&g, strength / (1.0 + g.largest_magnitude()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed_and_stream() {
        let a = random_state(4, &mut rng(7, 0));
        let b = random_state(4, &mut rng(7, 0));
        let c = random_state(4, &mut rng(7, 1));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn haar_unitaries_are_unitary() {
        let mut r = rng(1, 0);
        for d in 2..=8 {
            assert!(haar_unitary(d, &mut r).unitarity_deviation() < 1e-13);
        }
    }

    #[test]
    fn perturbed_pairs_keep_overlaps_away_from_zero() {
        let mut r = rng(3, 0);
        for d in 2..=6 {
            let (a, b) = perturbed_mub_pair(d, 0.3, &mut r);
            let g = a.overlaps(&b).unwrap();
            let min = g.iter().map(|c| c.norm()).fold(f64::INFINITY, f64::min);
            assert!(min > 0.3 / (d as f64).sqrt(), "d={d} min overlap {min}");
        }
    }
}

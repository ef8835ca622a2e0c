//! Weak values, Kirkwood-Dirac distributions and complex conditional probabilities.
//!
//! Conventions, with `|a⟩`, `|b⟩`, `|m⟩` drawn from three orthonormal bases:
//!
//! - weak value `A_w = ⟨m|A|ψ⟩ / ⟨m|ψ⟩`
//! - pre/post conditional `p(a|ψ,m) = ⟨m|a⟩⟨a|ψ⟩ / ⟨m|ψ⟩`
//! - joint quasiprobability `ρ(a,b|ψ) = ⟨b|a⟩⟨a|ψ⟩⟨ψ|b⟩`
//! - state-independent conditional `p(m|a,b) = ⟨b|m⟩⟨m|a⟩ / ⟨b|a⟩`
//!
//! With these definitions `Σ_{a,b} p(m|a,b) ρ(a,b|ψ) = |⟨m|ψ⟩|²` and
//! `Σ_{a,b,m} M_m p(m|a,b) |b⟩⟨b|a⟩⟨a| = M` hold for every input.

use crate::error::{QuantumError, Result};
use crate::hilbert::{
    commutator, expectation, CMatrix, Observable, OrthonormalBasis, StateVector, C64,
};
use crate::tolerance::Tolerances;

const TOL: Tolerances = Tolerances::DEFAULT;

fn check_dims(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(QuantumError::DimensionMismatch { expected, found })
    }
}

/// Left- and right-hand side of a numerical identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityCheck {
    pub lhs: f64,
    pub rhs: f64,
}

impl IdentityCheck {
    pub fn deviation(&self) -> f64 {
        (self.lhs - self.rhs).abs()
    }

    pub fn holds(&self, tolerance: f64) -> bool {
        self.deviation() < tolerance
    }
}

/// Aggregate measures of how far a quasiprobability is from a classical distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuasiprobSummary {
    /// `Σ |ρ| - 1`; zero iff every entry is real and non-negative.
    pub nonclassicality: f64,
    /// `Σ max(0, -Re ρ)`.
    pub negativity: f64,
    /// `Σ |Im ρ|`.
    pub imaginarity: f64,
}

/// Complex joint quasiprobability over two outcome labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexJointDistribution {
    values: CMatrix,
    labels_a: Vec<String>,
    labels_b: Vec<String>,
}

fn index_labels(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|k| format!("{prefix}{k}")).collect()
}

impl ComplexJointDistribution {
    /// Validates total normalization and real marginals.
    pub fn new(values: CMatrix, labels_a: Vec<String>, labels_b: Vec<String>) -> Result<Self> {
        let dist = Self::from_estimate(values, labels_a, labels_b)?;
        let total_error = (dist.total() - C64::new(1.0, 0.0)).norm();
        if !(total_error <= TOL.identity) {
            return Err(QuantumError::InvalidParameter(format!(
                "quasiprobability sums to {} (deviation {total_error:e})",
                dist.total()
            )));
        }
        let residue = dist
            .marginal_a()
            .iter()
            .chain(dist.marginal_b().iter())
            .map(|m| m.im.abs())
            .fold(0.0, f64::max);
        if residue > TOL.real_residue {
            return Err(QuantumError::NotReal {
                context: "quasiprobability marginal",
                residue,
            });
        }
        Ok(dist)
    }

    /// Wraps an estimate without enforcing the exact-distribution invariants.
    pub fn from_estimate(
        values: CMatrix,
        labels_a: Vec<String>,
        labels_b: Vec<String>,
    ) -> Result<Self> {
        check_dims(values.nrows(), labels_a.len())?;
        check_dims(values.ncols(), labels_b.len())?;
        Ok(Self {
            values,
            labels_a,
            labels_b,
        })
    }

    pub fn values(&self) -> &CMatrix {
        &self.values
    }

    pub fn get(&self, a: usize, b: usize) -> C64 {
        self.values[(a, b)]
    }

    pub fn dims(&self) -> (usize, usize) {
        self.values.shape()
    }

    pub fn labels_a(&self) -> &[String] {
        &self.labels_a
    }

    pub fn labels_b(&self) -> &[String] {
        &self.labels_b
    }

    pub fn total(&self) -> C64 {
        self.values.sum()
    }

    /// `Σ_b ρ(a,b)` for each `a`.
    pub fn marginal_a(&self) -> Vec<C64> {
        self.values.row_iter().map(|r| r.sum()).collect()
    }

    /// `Σ_a ρ(a,b)` for each `b`.
    pub fn marginal_b(&self) -> Vec<C64> {
        self.values.column_iter().map(|c| c.sum()).collect()
    }

    pub fn summary(&self) -> QuasiprobSummary {
        let mut s = QuasiprobSummary {
            nonclassicality: -1.0,
            negativity: 0.0,
            imaginarity: 0.0,
        };
        for v in self.values.iter() {
            s.nonclassicality += v.norm();
            s.negativity += (-v.re).max(0.0);
            s.imaginarity += v.im.abs();
        }
        s
    }

    /// Largest element-wise modulus of the difference to `other`.
    pub fn max_deviation(&self, other: &ComplexJointDistribution) -> f64 {
        crate::hilbert::max_abs_diff(&self.values, &other.values)
    }
}

/// Complex conditional probabilities `p(outcome | condition)`.
///
/// The condition space is either a single fixed condition (the pre/post form
/// `p(a|ψ,m)`, `conditions` empty) or a grid such as `(a, b)` for `p(m|a,b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexConditional {
    outcomes: usize,
    conditions: Vec<usize>,
    /// `values[flat_condition * outcomes + outcome]`
    values: Vec<C64>,
}

impl ComplexConditional {
    pub fn pre_post(values: Vec<C64>) -> Self {
        Self {
            outcomes: values.len(),
            conditions: Vec::new(),
            values,
        }
    }

    fn tensor(outcomes: usize, conditions: Vec<usize>, values: Vec<C64>) -> Self {
        debug_assert_eq!(values.len(), outcomes * conditions.iter().product::<usize>());
        Self {
            outcomes,
            conditions,
            values,
        }
    }

    pub fn outcomes(&self) -> usize {
        self.outcomes
    }

    pub fn condition_dims(&self) -> &[usize] {
        &self.conditions
    }

    pub fn condition_count(&self) -> usize {
        self.conditions.iter().product()
    }

    fn flat_condition(&self, condition: &[usize]) -> usize {
        assert_eq!(condition.len(), self.conditions.len(), "condition arity");
        condition
            .iter()
            .zip(&self.conditions)
            .fold(0, |acc, (&c, &n)| {
                assert!(c < n, "condition index {c} out of range {n}");
                acc * n + c
            })
    }

    pub fn get(&self, outcome: usize, condition: &[usize]) -> C64 {
        self.values[self.flat_condition(condition) * self.outcomes + outcome]
    }

    /// The distribution over outcomes for one condition.
    pub fn distribution(&self, condition: &[usize]) -> &[C64] {
        let start = self.flat_condition(condition) * self.outcomes;
        &self.values[start..start + self.outcomes]
    }

    /// All values, condition-major.
    pub fn values(&self) -> &[C64] {
        &self.values
    }

    /// `max_condition |Σ_outcome p - 1|`.
    pub fn normalization_error(&self) -> f64 {
        self.values
            .chunks(self.outcomes)
            .map(|chunk| (chunk.iter().sum::<C64>() - C64::new(1.0, 0.0)).norm())
            .fold(0.0, f64::max)
    }
}

/// A weak value together with the pre- and post-selection that define it.
#[derive(Debug, Clone, PartialEq)]
pub struct WeakValueRecord<'a> {
    pub value: C64,
    /// `⟨m|ψ⟩`
    pub overlap: C64,
    pub pre_state: &'a StateVector,
    pub post_state: &'a StateVector,
    pub observable: &'a Observable,
}

impl WeakValueRecord<'_> {
    /// `|A_w - Σ_a A_a p(a|ψ,m)|`.
    pub fn consistency_error(&self) -> Result<f64> {
        let p = conditional_pre_post(self.observable.eigenbasis(), self.pre_state, self.post_state)?;
        let average: C64 = self
            .observable
            .eigenvalues()
            .iter()
            .zip(p.values())
            .map(|(&a, &pa)| pa * a)
            .sum();
        Ok((average - self.value).norm())
    }
}

fn postselection_overlap(psi: &StateVector, m: &StateVector) -> Result<C64> {
    check_dims(psi.dim(), m.dim())?;
    let overlap = m.inner(psi);
    if !(overlap.norm() > TOL.overlap) {
        return Err(QuantumError::OrthogonalPostselection {
            overlap: overlap.norm(),
        });
    }
    Ok(overlap)
}

/// `⟨m|A|ψ⟩ / ⟨m|ψ⟩`.
pub fn weak_value<'a>(
    a: &'a Observable,
    psi: &'a StateVector,
    m: &'a StateVector,
) -> Result<WeakValueRecord<'a>> {
    check_dims(a.dim(), psi.dim())?;
    let overlap = postselection_overlap(psi, m)?;
    let numerator = m.amplitudes().dotc(&(a.matrix() * psi.amplitudes()));
    Ok(WeakValueRecord {
        value: numerator / overlap,
        overlap,
        pre_state: psi,
        post_state: m,
        observable: a,
    })
}

/// `p(a|ψ,m) = ⟨m|a⟩⟨a|ψ⟩ / ⟨m|ψ⟩`, the weak values of the projectors `|a⟩⟨a|`.
pub fn conditional_pre_post(
    a_basis: &OrthonormalBasis,
    psi: &StateVector,
    m: &StateVector,
) -> Result<ComplexConditional> {
    let overlap = postselection_overlap(psi, m)?;
    let a_psi = a_basis.coefficients(psi)?;
    let a_m = a_basis.coefficients(m)?;
    let values = a_psi
        .iter()
        .zip(a_m.iter())
        .map(|(&ap, &am)| am.conj() * ap / overlap)
        .collect();
    Ok(ComplexConditional::pre_post(values))
}

/// Kirkwood-Dirac distribution `ρ(a,b|ψ) = ⟨b|a⟩⟨a|ψ⟩⟨ψ|b⟩`.
pub fn kd_joint(
    a_basis: &OrthonormalBasis,
    b_basis: &OrthonormalBasis,
    psi: &StateVector,
) -> Result<ComplexJointDistribution> {
    check_dims(a_basis.dim(), b_basis.dim())?;
    let ba = b_basis.overlaps(a_basis)?; // ⟨b|a⟩ at (b, a)
    let a_psi = a_basis.coefficients(psi)?;
    let b_psi = b_basis.coefficients(psi)?;
    let values = CMatrix::from_fn(a_basis.dim(), b_basis.dim(), |a, b| {
        ba[(b, a)] * a_psi[a] * b_psi[b].conj()
    });
    ComplexJointDistribution::new(
        values,
        index_labels("a", a_basis.dim()),
        index_labels("b", b_basis.dim()),
    )
}

/// `⟨ψ|A²|ψ⟩` against `Σ_m |A_w(m)|² |⟨m|ψ⟩|²`.
///
/// Outcomes with `|⟨m|ψ⟩| ≤ 1e-12` enter through the limit `|⟨m|A|ψ⟩|²` of
/// the product, which avoids dividing by a vanishing overlap.
pub fn second_moment_identity(
    a: &Observable,
    psi: &StateVector,
    m_basis: &OrthonormalBasis,
) -> Result<IdentityCheck> {
    check_dims(a.dim(), psi.dim())?;
    check_dims(a.dim(), m_basis.dim())?;
    let a_psi = a.matrix() * psi.amplitudes();
    let lhs = psi.amplitudes().dotc(&(a.matrix() * &a_psi)).re;
    let numerators = m_basis.matrix().adjoint() * &a_psi;
    let overlaps = m_basis.coefficients(psi)?;
    let rhs = numerators
        .iter()
        .zip(overlaps.iter())
        .map(|(&num, &ov)| {
            if ov.norm() > TOL.overlap {
                (num / ov).norm_sqr() * ov.norm_sqr()
            } else {
                num.norm_sqr()
            }
        })
        .sum();
    Ok(IdentityCheck { lhs, rhs })
}

/// `(i/2)⟨ψ|[A,B]|ψ⟩` against `Σ_{a,b} A_a B_b Im ρ(a,b|ψ)`.
pub fn commutator_imag_identity(
    a: &Observable,
    b: &Observable,
    psi: &StateVector,
) -> Result<IdentityCheck> {
    check_dims(a.dim(), psi.dim())?;
    a.require_nondegenerate()?;
    b.require_nondegenerate()?;
    let comm = commutator(a, b)?;
    let lhs = psi.amplitudes().dotc(&(comm * psi.amplitudes())) * C64::new(0.0, 0.5);
    let scale = 1.0 + a.largest_magnitude() * b.largest_magnitude();
    if lhs.im.abs() > TOL.real_residue * scale {
        return Err(QuantumError::NotReal {
            context: "commutator expectation",
            residue: lhs.im.abs(),
        });
    }
    let rho = kd_joint(a.eigenbasis(), b.eigenbasis(), psi)?;
    let mut rhs = 0.0;
    for (i, &aa) in a.eigenvalues().iter().enumerate() {
        for (j, &bb) in b.eigenvalues().iter().enumerate() {
            rhs += aa * bb * rho.get(i, j).im;
        }
    }
    Ok(IdentityCheck { lhs: lhs.re, rhs })
}

/// Standard deviations of `A` and `B` in `ψ` and the bound `½|⟨ψ|[A,B]|ψ⟩|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UncertaintyCheck {
    pub delta_a: f64,
    pub delta_b: f64,
    pub bound: f64,
}

impl UncertaintyCheck {
    /// `ΔA ΔB - bound`; negative beyond the tolerance means a violation.
    pub fn slack(&self) -> f64 {
        self.delta_a * self.delta_b - self.bound
    }

    pub fn satisfied(&self, tolerance: f64) -> bool {
        self.slack() >= -tolerance
    }
}

fn std_dev(a: &Observable, psi: &StateVector) -> Result<f64> {
    let mean = expectation(a, psi)?;
    let a_psi = a.matrix() * psi.amplitudes();
    let second = a_psi.norm_squared();
    Ok((second - mean * mean).max(0.0).sqrt())
}

pub fn uncertainty_bound_check(
    a: &Observable,
    b: &Observable,
    psi: &StateVector,
) -> Result<UncertaintyCheck> {
    check_dims(a.dim(), psi.dim())?;
    let comm = commutator(a, b)?;
    let bound = 0.5 * psi.amplitudes().dotc(&(comm * psi.amplitudes())).norm();
    Ok(UncertaintyCheck {
        delta_a: std_dev(a, psi)?,
        delta_b: std_dev(b, psi)?,
        bound,
    })
}

/// `T[a,b,m] = ⟨b|a⟩⟨a|m⟩⟨m|b⟩` for three bases of equal dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct ThreeWayTensor {
    dim: usize,
    values: Vec<C64>,
    cyclic_deviation: f64,
}

impl ThreeWayTensor {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, a: usize, b: usize, m: usize) -> C64 {
        self.values[(a * self.dim + b) * self.dim + m]
    }

    /// Row-major `(a, b, m)` values.
    pub fn values(&self) -> &[C64] {
        &self.values
    }

    /// Largest disagreement between `ρ(a,b|m)`, `ρ(m,a|b)` and `ρ(b,m|a)`.
    pub fn cyclic_deviation(&self) -> f64 {
        self.cyclic_deviation
    }
}

/// Evaluates the three-way tensor through all three cyclic orderings of
/// [`kd_joint`] and records their largest mutual deviation.
pub fn kd_three_way(
    a_basis: &OrthonormalBasis,
    b_basis: &OrthonormalBasis,
    m_basis: &OrthonormalBasis,
) -> Result<ThreeWayTensor> {
    let d = a_basis.dim();
    check_dims(d, b_basis.dim())?;
    check_dims(d, m_basis.dim())?;
    // ρ(a,b|m), ρ(m,a|b), ρ(b,m|a) each for every conditioning state
    let given_m: Vec<_> = m_basis
        .vectors()
        .map(|m| kd_joint(a_basis, b_basis, &m))
        .collect::<Result<_>>()?;
    let given_b: Vec<_> = b_basis
        .vectors()
        .map(|b| kd_joint(m_basis, a_basis, &b))
        .collect::<Result<_>>()?;
    let given_a: Vec<_> = a_basis
        .vectors()
        .map(|a| kd_joint(b_basis, m_basis, &a))
        .collect::<Result<_>>()?;

    let mut values = Vec::with_capacity(d * d * d);
    let mut cyclic_deviation: f64 = 0.0;
    for a in 0..d {
        for b in 0..d {
            for m in 0..d {
                let t1 = given_m[m].get(a, b);
                let t2 = given_b[b].get(m, a);
                let t3 = given_a[a].get(b, m);
                cyclic_deviation = cyclic_deviation
                    .max((t1 - t2).norm())
                    .max((t2 - t3).norm())
                    .max((t1 - t3).norm());
                values.push(t1);
            }
        }
    }
    Ok(ThreeWayTensor {
        dim: d,
        values,
        cyclic_deviation,
    })
}

fn checked_pair_overlaps(a_basis: &OrthonormalBasis, b_basis: &OrthonormalBasis) -> Result<CMatrix> {
    let ba = b_basis.overlaps(a_basis)?;
    for a in 0..a_basis.dim() {
        for b in 0..b_basis.dim() {
            let overlap = ba[(b, a)].norm();
            if !(overlap > TOL.overlap) {
                return Err(QuantumError::OrthogonalBasisPair { a, b, overlap });
            }
        }
    }
    Ok(ba)
}

/// `p(m|a,b) = ⟨b|m⟩⟨m|a⟩ / ⟨b|a⟩`, indexed `get(m, &[a, b])`.
pub fn universal_conditional(
    m_basis: &OrthonormalBasis,
    a_basis: &OrthonormalBasis,
    b_basis: &OrthonormalBasis,
) -> Result<ComplexConditional> {
    let d = m_basis.dim();
    check_dims(d, a_basis.dim())?;
    check_dims(d, b_basis.dim())?;
    let ba = checked_pair_overlaps(a_basis, b_basis)?;
    let bm = b_basis.overlaps(m_basis)?;
    let ma = m_basis.overlaps(a_basis)?;
    let mut values = Vec::with_capacity(d * d * d);
    for a in 0..d {
        for b in 0..d {
            for m in 0..d {
                values.push(bm[(b, m)] * ma[(m, a)] / ba[(b, a)]);
            }
        }
    }
    Ok(ComplexConditional::tensor(d, vec![d, d], values))
}

/// `p(m) = Σ_{a,b} p(m|a,b) ρ(a,b|ψ)`.
pub fn predict_born(
    universal: &ComplexConditional,
    rho: &ComplexJointDistribution,
) -> Result<Vec<f64>> {
    let (da, db) = rho.dims();
    let dims = universal.condition_dims();
    if dims.len() != 2 {
        return Err(QuantumError::InvalidParameter(
            "prediction needs a conditional over (a, b) pairs".into(),
        ));
    }
    check_dims(dims[0], da)?;
    check_dims(dims[1], db)?;
    let mut p = vec![C64::new(0.0, 0.0); universal.outcomes()];
    for a in 0..da {
        for b in 0..db {
            let weight = rho.get(a, b);
            for (pm, &cond) in p.iter_mut().zip(universal.distribution(&[a, b])) {
                *pm += cond * weight;
            }
        }
    }
    let residue = p.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
    if residue > TOL.real_residue {
        return Err(QuantumError::NotReal {
            context: "predicted probability",
            residue,
        });
    }
    Ok(p.into_iter().map(|v| v.re).collect())
}

/// `Σ_{a,b,m} M_m p(m|a,b) |b⟩⟨b|a⟩⟨a|`.
pub fn reconstruct_operator(
    m_values: &[f64],
    universal: &ComplexConditional,
    a_basis: &OrthonormalBasis,
    b_basis: &OrthonormalBasis,
) -> Result<CMatrix> {
    let d = a_basis.dim();
    check_dims(d, b_basis.dim())?;
    check_dims(universal.outcomes(), m_values.len())?;
    if universal.condition_dims() != [d, d] {
        return Err(QuantumError::InvalidParameter(
            "conditional does not match the (a, b) bases".into(),
        ));
    }
    let ba = checked_pair_overlaps(a_basis, b_basis)?;
    let av = a_basis.matrix();
    let bv = b_basis.matrix();
    let mut out = CMatrix::zeros(d, d);
    for a in 0..d {
        for b in 0..d {
            let weight: C64 = m_values
                .iter()
                .zip(universal.distribution(&[a, b]))
                .map(|(&mm, &p)| p * mm)
                .sum::<C64>()
                * ba[(b, a)];
            out += bv.column(b) * av.column(a).adjoint() * weight;
        }
    }
    Ok(out)
}

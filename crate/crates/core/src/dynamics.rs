//! Time evolution on finite models.
//!
//! All propagation is exact: `U(t) = exp(-iHt/ħ)` is applied through the
//! spectral decomposition of `H`, never through a step integrator.
//!
//! Two finite stand-ins for a free particle are provided. [`LatticeParticle`]
//! is a periodic lattice with a discrete Fourier momentum; it keeps exact
//! unitarity and carries the free propagator and its coarse-graining.
//! [`TruncatedOscillatorPair`] builds `x` and `p` from truncated ladder
//! operators, so `[x, p] = iħ` holds away from the top levels; it carries the
//! two-time position correlation.

use std::f64::consts::PI;

use crate::error::{QuantumError, Result};
use crate::hilbert::{
    evolve, evolve_heisenberg, max_abs_diff, spectral_decompose, CMatrix, CVector, Degeneracy,
    Observable, OrthonormalBasis, StateVector, UnitaryMap, C64,
};
use crate::quasiprob::{kd_joint, ComplexConditional, IdentityCheck};
use crate::tolerance::Tolerances;

const TOL: Tolerances = Tolerances::DEFAULT;

fn check_dims(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(QuantumError::DimensionMismatch { expected, found })
    }
}

fn check_positive(name: &str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(QuantumError::InvalidParameter(format!(
            "{name} must be positive and finite, got {value}"
        )))
    }
}

/// `U†(t) A U(t)` with `U(t) = exp(-iHt/ħ)`.
pub fn heisenberg_at(a: &Observable, h: &Observable, t: f64, hbar: f64) -> Result<Observable> {
    check_dims(a.dim(), h.dim())?;
    check_positive("hbar", hbar)?;
    if t == 0.0 {
        return Ok(a.clone());
    }
    evolve_heisenberg(&UnitaryMap::evolution(h, t, hbar), a)
}

/// Central difference of `⟨ψ(t)|A|ψ(t)⟩` at `t = 0` against
/// `(2/ħ) Σ_{a,n} A_a E_n Im ρ(n,a|ψ)` with `ρ` over (energy, `A`) eigenbases.
pub fn motion_identity_check(
    a: &Observable,
    h: &Observable,
    psi: &StateVector,
    dt: f64,
    hbar: f64,
) -> Result<IdentityCheck> {
    check_dims(a.dim(), h.dim())?;
    check_dims(a.dim(), psi.dim())?;
    check_positive("dt", dt)?;
    check_positive("hbar", hbar)?;
    a.require_nondegenerate()?;
    h.require_nondegenerate()?;

    let at = |t: f64| -> Result<f64> {
        crate::hilbert::expectation(a, &evolve(&UnitaryMap::evolution(h, t, hbar), psi)?)
    };
    let lhs = (at(dt)? - at(-dt)?) / (2.0 * dt);

    let rho = kd_joint(h.eigenbasis(), a.eigenbasis(), psi)?;
    let mut rhs = 0.0;
    for (n, &e) in h.eigenvalues().iter().enumerate() {
        for (k, &av) in a.eigenvalues().iter().enumerate() {
            rhs += av * e * rho.get(n, k).im;
        }
    }
    Ok(IdentityCheck {
        lhs,
        rhs: 2.0 / hbar * rhs,
    })
}

/// Residuals of [`motion_identity_check`] over a ladder of time steps.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionLadder {
    pub dts: Vec<f64>,
    pub checks: Vec<IdentityCheck>,
    /// Least-squares slope of `ln|lhs - rhs|` against `ln dt`.
    pub slope: f64,
}

impl MotionLadder {
    pub fn residuals(&self) -> Vec<f64> {
        self.checks.iter().map(IdentityCheck::deviation).collect()
    }
}

pub fn motion_identity_ladder(
    a: &Observable,
    h: &Observable,
    psi: &StateVector,
    dts: &[f64],
    hbar: f64,
) -> Result<MotionLadder> {
    if dts.len() < 2 {
        return Err(QuantumError::InvalidParameter(
            "a dt ladder needs at least two rungs".into(),
        ));
    }
    let checks = dts
        .iter()
        .map(|&dt| motion_identity_check(a, h, psi, dt, hbar))
        .collect::<Result<Vec<_>>>()?;
    let residuals: Vec<f64> = checks.iter().map(IdentityCheck::deviation).collect();
    Ok(MotionLadder {
        dts: dts.to_vec(),
        slope: loglog_slope(dts, &residuals),
        checks,
    })
}

/// Least-squares slope of `ln y` against `ln x`. NaN when any `y` is zero.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    cov / var
}

/// Position and momentum built from ladder operators truncated to `dim` levels.
#[derive(Debug, Clone)]
pub struct TruncatedOscillatorPair {
    dim: usize,
    mass: f64,
    frequency: f64,
    hbar: f64,
    x_op: Observable,
    p_op: Observable,
}

impl TruncatedOscillatorPair {
    /// `x = √(ħ/2mω)(a + a†)`, `p = i√(ħmω/2)(a† - a)`; `ω` only sets the length scale.
    pub fn new(dim: usize, mass: f64, frequency: f64, hbar: f64) -> Result<Self> {
        if dim < 4 {
            return Err(QuantumError::InvalidDimension(dim));
        }
        check_positive("mass", mass)?;
        check_positive("frequency", frequency)?;
        check_positive("hbar", hbar)?;
        let mut lower = CMatrix::zeros(dim, dim);
        for n in 1..dim {
            lower[(n - 1, n)] = C64::new((n as f64).sqrt(), 0.0);
        }
        let raise = lower.adjoint();
        let x = (&lower + &raise) * C64::new((hbar / (2.0 * mass * frequency)).sqrt(), 0.0);
        let p = (&raise - &lower) * C64::new(0.0, (hbar * mass * frequency / 2.0).sqrt());
        Ok(Self {
            dim,
            mass,
            frequency,
            hbar,
            x_op: spectral_decompose(&x, TOL.hermiticity)?,
            p_op: spectral_decompose(&p, TOL.hermiticity)?,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn frequency(&self) -> f64 {
        self.frequency
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn x_op(&self) -> &Observable {
        &self.x_op
    }

    pub fn p_op(&self) -> &Observable {
        &self.p_op
    }

    /// `p²/2m`, assembled on the momentum eigenbasis (its spectrum is doubly degenerate).
    pub fn free_hamiltonian(&self) -> Result<Observable> {
        let energies = self
            .p_op
            .eigenvalues()
            .iter()
            .map(|p| p * p / (2.0 * self.mass))
            .collect();
        Observable::from_spectrum(energies, self.p_op.eigenbasis().clone(), Degeneracy::Allow)
    }

    /// Max `|[x,p] - iħ|` over the levels below `dim - 2`.
    pub fn commutator_deviation(&self) -> f64 {
        let c = self.x_op.matrix() * self.p_op.matrix() - self.p_op.matrix() * self.x_op.matrix();
        let k = self.dim - 2;
        let expected = CMatrix::identity(k, k) * C64::new(0.0, self.hbar);
        max_abs_diff(&c.view((0, 0), (k, k)).into_owned(), &expected)
    }

    /// Normalized superposition of Fock states with the given amplitudes.
    pub fn fock_superposition(&self, amplitudes: &[C64]) -> Result<StateVector> {
        if amplitudes.len() > self.dim {
            return Err(QuantumError::DimensionMismatch {
                expected: self.dim,
                found: amplitudes.len(),
            });
        }
        let mut v = CVector::zeros(self.dim);
        v.rows_mut(0, amplitudes.len()).copy_from_slice(amplitudes);
        StateVector::normalize_vector(v)
    }

    pub fn ground_state(&self) -> StateVector {
        StateVector::basis_state(self.dim, 0).expect("dim >= 4")
    }
}

/// Measured and predicted imaginary part of a two-time position correlation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoTimeCorrelation {
    /// `Im⟨ψ|x(t2) x(t1)|ψ⟩`.
    pub measured: f64,
    /// `ħ (t2 - t1) / 2m`.
    pub predicted: f64,
    /// Largest population above the guard level seen along the evolution.
    pub leakage: f64,
}

impl TwoTimeCorrelation {
    pub fn deviation(&self) -> f64 {
        (self.measured - self.predicted).abs()
    }

    /// `|measured - predicted| <= 1e-3·|predicted| + 1e-8`.
    pub fn within_truncation_tolerance(&self) -> bool {
        self.deviation() <= 1e-3 * self.predicted.abs() + 1e-8
    }
}

/// Population allowed above level `dim/2` anywhere along the evolution.
pub const LEAKAGE_LIMIT: f64 = 1e-6;

pub fn two_time_imag_correlation(
    sys: &TruncatedOscillatorPair,
    h_free: &Observable,
    psi: &StateVector,
    t1: f64,
    t2: f64,
) -> Result<TwoTimeCorrelation> {
    check_dims(sys.dim, h_free.dim())?;
    check_dims(sys.dim, psi.dim())?;
    let p = sys.p_op.matrix();
    let expected_h = p * p * C64::new(1.0 / (2.0 * sys.mass), 0.0);
    let h_dev = max_abs_diff(h_free.matrix(), &expected_h);
    if h_dev > TOL.hermiticity * (1.0 + sys.p_op.largest_magnitude().powi(2)) {
        return Err(QuantumError::InvalidParameter(format!(
            "free Hamiltonian differs from p²/2m by {h_dev:e}"
        )));
    }

    let guard = sys.dim / 2;
    let (lo, hi) = (t1.min(t2).min(0.0), t1.max(t2).max(0.0));
    let mut leakage: f64 = psi.population_from(guard);
    const SAMPLES: usize = 16;
    for k in 0..=SAMPLES {
        let t = lo + (hi - lo) * k as f64 / SAMPLES as f64;
        let evolved = evolve(&UnitaryMap::evolution(h_free, t, sys.hbar), psi)?;
        leakage = leakage.max(evolved.population_from(guard));
    }
    if leakage > LEAKAGE_LIMIT {
        return Err(QuantumError::TruncationViolated {
            population: leakage,
            level: guard,
        });
    }

    let x1 = heisenberg_at(&sys.x_op, h_free, t1, sys.hbar)?;
    let x2 = heisenberg_at(&sys.x_op, h_free, t2, sys.hbar)?;
    // ⟨ψ|x2 x1|ψ⟩ = ⟨x2 ψ|x1 ψ⟩ for Hermitian x2
    let v1 = x1.matrix() * psi.amplitudes();
    let v2 = x2.matrix() * psi.amplitudes();
    Ok(TwoTimeCorrelation {
        measured: v2.dotc(&v1).im,
        predicted: sys.hbar * (t2 - t1) / (2.0 * sys.mass),
        leakage,
    })
}

/// Particle on a periodic lattice of `dim` sites and length `length`.
#[derive(Debug, Clone)]
pub struct LatticeParticle {
    dim: usize,
    length: f64,
    mass: f64,
    hbar: f64,
    position_op: Observable,
    momentum_op: Observable,
}

pub const MIN_LATTICE_SITES: usize = 16;

impl LatticeParticle {
    /// Positions `j·L/d`; momenta `2πħk/L` for `k = -d/2 … d/2-1`, with
    /// eigenvectors `⟨x_j|p_k⟩ = e^{2πi jk/d}/√d`.
    pub fn new(dim: usize, length: f64, mass: f64, hbar: f64) -> Result<Self> {
        if dim < MIN_LATTICE_SITES {
            return Err(QuantumError::InvalidDimension(dim));
        }
        check_positive("length", length)?;
        check_positive("mass", mass)?;
        check_positive("hbar", hbar)?;
        let positions = (0..dim).map(|j| j as f64 * length / dim as f64).collect();
        let position_op = Observable::from_spectrum(
            positions,
            OrthonormalBasis::computational(dim)?,
            Degeneracy::Forbid,
        )?;
        let half = (dim / 2) as i64;
        let ks: Vec<i64> = (0..dim as i64).map(|i| i - half).collect();
        let scale = 1.0 / (dim as f64).sqrt();
        let vectors = CMatrix::from_fn(dim, dim, |j, col| {
            let phase = 2.0 * PI * (j as i64 * ks[col]).rem_euclid(dim as i64) as f64 / dim as f64;
            C64::from_polar(scale, phase)
        });
        let momenta = ks
            .iter()
            .map(|&k| 2.0 * PI * hbar * k as f64 / length)
            .collect();
        let momentum_op = Observable::from_spectrum(
            momenta,
            OrthonormalBasis::from_columns(vectors)?,
            Degeneracy::Forbid,
        )?;
        Ok(Self {
            dim,
            length,
            mass,
            hbar,
            position_op,
            momentum_op,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.dim as f64
    }

    pub fn position_op(&self) -> &Observable {
        &self.position_op
    }

    pub fn momentum_op(&self) -> &Observable {
        &self.momentum_op
    }

    /// Index into the ascending momentum spectrum for wavenumber `k ∈ [-d/2, d/2)`.
    pub fn momentum_index(&self, k: i64) -> Result<usize> {
        let idx = k + (self.dim / 2) as i64;
        if idx < 0 || idx >= self.dim as i64 {
            return Err(QuantumError::InvalidParameter(format!(
                "wavenumber {k} outside the Brillouin zone"
            )));
        }
        Ok(idx as usize)
    }

    /// `p̂²/2m` on the momentum eigenbasis.
    pub fn hamiltonian(&self) -> Result<Observable> {
        let energies = self
            .momentum_op
            .eigenvalues()
            .iter()
            .map(|p| p * p / (2.0 * self.mass))
            .collect();
        Observable::from_spectrum(
            energies,
            self.momentum_op.eigenbasis().clone(),
            Degeneracy::Allow,
        )
    }
}

/// Distance on a circle of circumference `length`.
pub fn modular_distance(a: f64, b: f64, length: f64) -> f64 {
    let d = (a - b).rem_euclid(length);
    d.min(length - d)
}

/// The complex conditional `p(x_t | x_0, p_0)` on a lattice, with its metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagatorField {
    pub dim: usize,
    pub length: f64,
    pub mass: f64,
    pub hbar: f64,
    pub time: f64,
    pub x0_index: usize,
    pub p0_index: usize,
    pub x0: f64,
    pub p0: f64,
    pub conditional: ComplexConditional,
}

impl PropagatorField {
    pub fn spacing(&self) -> f64 {
        self.length / self.dim as f64
    }

    /// `x_0 + p_0 t/m (mod L)`.
    pub fn classical_position(&self) -> f64 {
        (self.x0 + self.p0 * self.time / self.mass).rem_euclid(self.length)
    }

    /// Wrapped phase differences `arg(p_{j+1}/p_j)`, one per lattice bond.
    pub fn phase_gradient(&self) -> Vec<f64> {
        let v = self.conditional.values();
        (0..self.dim)
            .map(|j| (v[(j + 1) % self.dim] * v[j].conj()).arg())
            .collect()
    }

    /// Bond midpoint with the smallest phase gradient within `half_window`
    /// bonds of `center` (ties to the lowest offset).
    pub fn stationary_phase_position(&self, center: f64, half_window: usize) -> f64 {
        let grad = self.phase_gradient();
        let a = self.spacing();
        let c = (center / a - 0.5).round() as i64;
        let w = half_window as i64;
        let best = (c - w..=c + w)
            .min_by(|&i, &j| {
                let gi = grad[i.rem_euclid(self.dim as i64) as usize].abs();
                let gj = grad[j.rem_euclid(self.dim as i64) as usize].abs();
                gi.total_cmp(&gj)
            })
            .expect("non-empty window");
        ((best as f64 + 0.5) * a).rem_euclid(self.length)
    }
}

/// `p(x_t|x_0,p_0) = ⟨p_0|U†(t)|x_t⟩⟨x_t|U(t)|x_0⟩ / ⟨p_0|x_0⟩`,
/// `U(t) = exp(-i p̂² t / 2mħ)`.
pub fn free_propagator_conditional(
    sys: &LatticeParticle,
    x0_index: usize,
    p0_index: usize,
    t: f64,
) -> Result<PropagatorField> {
    let d = sys.dim;
    if x0_index >= d || p0_index >= d {
        return Err(QuantumError::InvalidParameter(format!(
            "lattice indices ({x0_index}, {p0_index}) out of range for {d} sites"
        )));
    }
    if !t.is_finite() {
        return Err(QuantumError::InvalidParameter(format!("time must be finite, got {t}")));
    }
    let pb = sys.momentum_op.eigenbasis().matrix();
    let momenta = sys.momentum_op.eigenvalues();
    let phase = |p: f64| C64::from_polar(1.0, -p * p * t / (2.0 * sys.mass * sys.hbar));
    let phases: Vec<C64> = momenta.iter().map(|&p| phase(p)).collect();

    // ⟨x_j|U|x_0⟩ = Σ_k ⟨x_j|p_k⟩ e^{-iE_k t/ħ} ⟨p_k|x_0⟩
    let column: Vec<C64> = (0..d)
        .map(|j| (0..d).map(|k| pb[(j, k)] * phases[k] * pb[(x0_index, k)].conj()).sum())
        .collect();
    // ⟨p_0|U†|x_j⟩ = e^{+iE_0 t/ħ} ⟨p_0|x_j⟩
    let back = phases[p0_index].conj();
    let denominator = pb[(x0_index, p0_index)].conj();
    if !(denominator.norm() > TOL.overlap) {
        return Err(QuantumError::OrthogonalBasisPair {
            a: x0_index,
            b: p0_index,
            overlap: denominator.norm(),
        });
    }
    let values = (0..d)
        .map(|j| back * pb[(j, p0_index)].conj() * column[j] / denominator)
        .collect();
    Ok(PropagatorField {
        dim: d,
        length: sys.length,
        mass: sys.mass,
        hbar: sys.hbar,
        time: t,
        x0_index,
        p0_index,
        x0: sys.position_op.eigenvalues()[x0_index],
        p0: momenta[p0_index],
        conditional: ComplexConditional::pre_post(values),
    })
}

/// Modulus of the smoothed conditional, renormalized to unit sum.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseGrained {
    pub kernel_width: f64,
    pub spacing: f64,
    pub weights: Vec<f64>,
}

impl CoarseGrained {
    /// Index of the largest weight, ties to the lowest index.
    pub fn argmax(&self) -> usize {
        let max = self.weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        self.weights.iter().position(|&w| w == max).expect("non-empty")
    }

    pub fn argmax_position(&self) -> f64 {
        self.argmax() as f64 * self.spacing
    }

    pub fn max_min_ratio(&self) -> f64 {
        let max = self.weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = self.weights.iter().copied().fold(f64::INFINITY, f64::min);
        max / min
    }
}

/// Periodic Gaussian kernel on the lattice, normalized to unit sum.
fn periodic_gaussian(dim: usize, spacing: f64, width: f64) -> Vec<f64> {
    let length = dim as f64 * spacing;
    let images = (3.0 * width / length).ceil() as i64 + 1;
    let raw: Vec<f64> = (0..dim)
        .map(|j| {
            (-images..=images)
                .map(|n| {
                    let x = j as f64 * spacing + n as f64 * length;
                    (-x * x / (2.0 * width * width)).exp()
                })
                .sum()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Convolves the complex conditional with a periodic Gaussian of standard
/// deviation `kernel_width` (position units).
pub fn coarse_grain(field: &PropagatorField, kernel_width: f64) -> Result<CoarseGrained> {
    let spacing = field.spacing();
    let minimum = 2.0 * spacing;
    if !(kernel_width >= minimum) {
        return Err(QuantumError::KernelTooNarrow {
            width: kernel_width,
            minimum,
        });
    }
    let d = field.dim;
    let kernel = periodic_gaussian(d, spacing, kernel_width);
    let values = field.conditional.values();
    let smoothed: Vec<f64> = (0..d)
        .map(|j| {
            (0..d)
                .map(|k| values[k] * kernel[(j + d - k) % d])
                .sum::<C64>()
                .norm()
        })
        .collect();
    let total: f64 = smoothed.iter().sum();
    Ok(CoarseGrained {
        kernel_width,
        spacing,
        weights: smoothed.into_iter().map(|w| w / total).collect(),
    })
}

//! Weak measurement with a discretised Gaussian pointer.
//!
//! The system couples to the pointer through an interaction that displaces the
//! pointer wavefunction by `g·A_a` on the eigenspace `|a⟩`. After the
//! interaction the system is post-selected on `|m⟩`, leaving the unnormalized
//! pointer state
//!
//! ```text
//! Φ(x) = Σ_a ⟨m|a⟩⟨a|ψ⟩ φ(x - g A_a)
//! ```
//!
//! whose norm is the post-selection probability. The post-selected mean
//! position reads out `g·Re A_w`, the mean momentum `κ·g·Im A_w`, where the
//! response `κ` is calibrated on a reference case (see
//! [`calibrate_momentum_response`]).
//!
//! A centred Gaussian pointer is reflection symmetric, so both readouts are odd
//! in `g` and the estimates `readout / g` carry an even bias `O(g²)`. Ladders
//! are extrapolated accordingly.

use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{ChannelFailure, QuantumError, Result};
use crate::hilbert::{
    qubit, CMatrix, Observable, OrthonormalBasis, StateVector, C64,
};
use crate::quasiprob::{weak_value, ComplexJointDistribution};
use crate::random;
use crate::tolerance::Tolerances;

const TOL: Tolerances = Tolerances::DEFAULT;

pub const DEFAULT_GRID_POINTS: usize = 1024;
/// Default half-width of the grid in units of the spread.
pub const DEFAULT_HALF_WIDTH: f64 = 10.0;
const MIN_GRID_POINTS: usize = 256;
const MIN_HALF_WIDTH: f64 = 8.0;

/// Discretised Gaussian meter `φ(x) = (2πσ²)^{-1/4} exp(-x²/4σ²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointerModel {
    grid: Vec<f64>,
    spread: f64,
    coupling: f64,
}

impl PointerModel {
    /// Uniform grid `x_j = -W + j·2W/N`, `W = half_width·σ`.
    pub fn new(spread: f64, coupling: f64, grid_points: usize, half_width: f64) -> Result<Self> {
        if !(spread > 0.0) || !spread.is_finite() {
            return Err(QuantumError::InvalidPointer(format!("spread must be positive, got {spread}")));
        }
        if !(coupling >= 0.0) || !coupling.is_finite() {
            return Err(QuantumError::InvalidPointer(format!(
                "coupling must be non-negative, got {coupling}"
            )));
        }
        if grid_points < MIN_GRID_POINTS {
            return Err(QuantumError::InvalidPointer(format!(
                "at least {MIN_GRID_POINTS} grid points required, got {grid_points}"
            )));
        }
        if !(half_width >= MIN_HALF_WIDTH) {
            return Err(QuantumError::InvalidPointer(format!(
                "grid must span at least ±{MIN_HALF_WIDTH}σ, got ±{half_width}σ"
            )));
        }
        let w = half_width * spread;
        let dx = 2.0 * w / grid_points as f64;
        let grid = (0..grid_points).map(|j| -w + j as f64 * dx).collect();
        let pointer = Self {
            grid,
            spread,
            coupling,
        };
        let norm_error = (pointer.norm_sqr(&pointer.profile(0.0)) - 1.0).abs();
        if norm_error > 1e-8 {
            return Err(QuantumError::InvalidPointer(format!(
                "discrete norm of the initial profile deviates by {norm_error:e}"
            )));
        }
        Ok(pointer)
    }

    /// 1024 points over ±10σ.
    pub fn with_defaults(spread: f64, coupling: f64) -> Result<Self> {
        Self::new(spread, coupling, DEFAULT_GRID_POINTS, DEFAULT_HALF_WIDTH)
    }

    pub fn with_coupling(&self, coupling: f64) -> Result<Self> {
        if !(coupling >= 0.0) || !coupling.is_finite() {
            return Err(QuantumError::InvalidPointer(format!(
                "coupling must be non-negative, got {coupling}"
            )));
        }
        Ok(Self {
            coupling,
            ..self.clone()
        })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn grid_points(&self) -> usize {
        self.grid.len()
    }

    pub fn spread(&self) -> f64 {
        self.spread
    }

    pub fn coupling(&self) -> f64 {
        self.coupling
    }

    pub fn spacing(&self) -> f64 {
        self.grid[1] - self.grid[0]
    }

    pub fn extent(&self) -> f64 {
        self.spacing() * self.grid.len() as f64
    }

    pub fn half_width(&self) -> f64 {
        self.extent() / (2.0 * self.spread)
    }

    /// Gaussian profile displaced by `shift`.
    fn profile(&self, shift: f64) -> Vec<f64> {
        let s2 = self.spread * self.spread;
        let amp = (2.0 * std::f64::consts::PI * s2).powf(-0.25);
        self.grid
            .iter()
            .map(|&x| amp * (-(x - shift).powi(2) / (4.0 * s2)).exp())
            .collect()
    }

    fn norm_sqr<T: Copy + Into<C64>>(&self, amplitudes: &[T]) -> f64 {
        amplitudes.iter().map(|&a| a.into().norm_sqr()).sum::<f64>() * self.spacing()
    }

    /// Momentum grid of the discrete Fourier transform, in FFT output order (`ħ = 1`).
    fn momenta(&self) -> Vec<f64> {
        let n = self.grid.len() as i64;
        let dp = 2.0 * std::f64::consts::PI / self.extent();
        (0..n)
            .map(|k| if k < n / 2 { k } else { k - n })
            .map(|k| k as f64 * dp)
            .collect()
    }
}

/// Whether post-selections below `|⟨m|ψ⟩|² = 1e-12` are accepted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Postselection {
    #[default]
    Strict,
    AllowRare,
}

/// How pointer readouts are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReadoutMode {
    /// Exact post-selected expectation values.
    #[default]
    Exact,
    /// Monte Carlo readouts drawn from the exact post-selected distributions.
    Sampled { samples: u64, seed: u64 },
}

/// Post-selected pointer statistics, exact or estimated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PostselectedReadout {
    pub coupling: f64,
    pub postselection_probability: f64,
    pub mean_position_shift: f64,
    pub mean_momentum_shift: f64,
    /// Zero for exact readouts.
    pub sample_count: u64,
    /// Standard errors of the (position, momentum) shifts; zero for exact readouts.
    pub standard_errors: (f64, f64),
}

/// Unnormalized post-selected pointer wavefunction.
struct PostselectedPointer {
    amplitudes: Vec<C64>,
    probability: f64,
}

/// One term `amplitude · φ(x - g·eigenvalue)` of the post-selected pointer.
#[derive(Debug, Clone, Copy)]
struct Branch {
    eigenvalue: f64,
    amplitude: C64,
}

fn branches(a: &Observable, psi: &StateVector, m: &StateVector) -> Result<Vec<Branch>> {
    let on_psi = a.eigenbasis().coefficients(psi)?;
    let on_m = a.eigenbasis().coefficients(m)?;
    Ok(a.eigenvalues()
        .iter()
        .zip(on_psi.iter().zip(on_m.iter()))
        .map(|(&eigenvalue, (&ap, &am))| Branch {
            eigenvalue,
            amplitude: am.conj() * ap,
        })
        .collect())
}

fn check_displacement(pointer: &PointerModel, a: &Observable) -> Result<()> {
    let displacement = pointer.coupling * a.largest_magnitude();
    let limit = pointer.extent() / 4.0;
    if displacement > limit {
        return Err(QuantumError::GridTooCoarse {
            displacement,
            limit,
        });
    }
    Ok(())
}

fn check_postselection(psi: &StateVector, m: &StateVector, policy: Postselection) -> Result<()> {
    if psi.dim() != m.dim() {
        return Err(QuantumError::DimensionMismatch {
            expected: psi.dim(),
            found: m.dim(),
        });
    }
    let overlap = m.inner(psi).norm();
    if policy == Postselection::Strict && overlap * overlap < TOL.postselection_probability {
        return Err(QuantumError::OrthogonalPostselection { overlap });
    }
    Ok(())
}

fn postselected_pointer(pointer: &PointerModel, branches: &[Branch]) -> Result<PostselectedPointer> {
    let mut amplitudes = vec![C64::new(0.0, 0.0); pointer.grid.len()];
    for br in branches.iter().filter(|b| b.amplitude != C64::new(0.0, 0.0)) {
        let profile = pointer.profile(pointer.coupling * br.eigenvalue);
        for (out, p) in amplitudes.iter_mut().zip(profile) {
            *out += br.amplitude * p;
        }
    }
    let probability = pointer.norm_sqr(&amplitudes);
    if !(probability > 0.0) {
        let overlap = branches.iter().map(|b| b.amplitude).sum::<C64>().norm();
        return Err(QuantumError::OrthogonalPostselection { overlap });
    }
    Ok(PostselectedPointer {
        amplitudes,
        probability,
    })
}

/// Position and momentum outcome distributions of a pointer state, each normalized.
struct PointerDistributions {
    positions: Vec<f64>,
    position_weights: Vec<f64>,
    momenta: Vec<f64>,
    momentum_weights: Vec<f64>,
}

fn distributions(pointer: &PointerModel, amplitudes: &[C64]) -> PointerDistributions {
    let position_weights = normalize(amplitudes.iter().map(|a| a.norm_sqr()).collect());
    let mut spectrum = amplitudes.to_vec();
    FftPlanner::new()
        .plan_fft_forward(spectrum.len())
        .process(&mut spectrum);
    let momentum_weights = normalize(spectrum.iter().map(|a| a.norm_sqr()).collect());
    PointerDistributions {
        positions: pointer.grid.clone(),
        position_weights,
        momenta: pointer.momenta(),
        momentum_weights,
    }
}

fn normalize(weights: Vec<f64>) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

fn mean(values: &[f64], weights: &[f64]) -> f64 {
    values.iter().zip(weights).map(|(v, w)| v * w).sum()
}

fn variance(values: &[f64], weights: &[f64]) -> f64 {
    let mu = mean(values, weights);
    values.iter().zip(weights).map(|(v, w)| w * (v - mu).powi(2)).sum()
}

/// Reference means of the uncoupled pointer, subtracted to obtain shifts.
fn baseline(pointer: &PointerModel) -> (f64, f64) {
    let profile: Vec<C64> = pointer.profile(0.0).into_iter().map(|p| C64::new(p, 0.0)).collect();
    let d = distributions(pointer, &profile);
    (
        mean(&d.positions, &d.position_weights),
        mean(&d.momenta, &d.momentum_weights),
    )
}

fn exact_readout(pointer: &PointerModel, branches: &[Branch]) -> Result<PostselectedReadout> {
    let state = postselected_pointer(pointer, branches)?;
    let d = distributions(pointer, &state.amplitudes);
    let (x0, p0) = baseline(pointer);
    Ok(PostselectedReadout {
        coupling: pointer.coupling,
        postselection_probability: state.probability,
        mean_position_shift: mean(&d.positions, &d.position_weights) - x0,
        mean_momentum_shift: mean(&d.momenta, &d.momentum_weights) - p0,
        sample_count: 0,
        standard_errors: (0.0, 0.0),
    })
}

/// Sample mean and standard error of `samples` draws from a discrete distribution.
fn sample_mean<R: rand::Rng>(values: &[f64], weights: &[f64], samples: u64, rng: &mut R) -> (f64, f64) {
    let dist = WeightedIndex::new(weights).expect("normalized non-negative weights");
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..samples {
        let v = values[dist.sample(rng)];
        sum += v;
        sum_sq += v * v;
    }
    let n = samples as f64;
    let mu = sum / n;
    let var = if samples > 1 {
        ((sum_sq - n * mu * mu) / (n - 1.0)).max(0.0)
    } else {
        variance(values, weights)
    };
    (mu, (var / n).sqrt())
}

/// Substream layout: two quadratures per channel.
fn stream_id(channel: u64, quadrature: u64) -> u64 {
    channel * 2 + quadrature
}

fn sampled_readout(
    pointer: &PointerModel,
    branches: &[Branch],
    samples: u64,
    seed: u64,
    channel: u64,
) -> Result<PostselectedReadout> {
    if samples == 0 {
        return Err(QuantumError::InvalidParameter("samples must be at least 1".into()));
    }
    let state = postselected_pointer(pointer, branches)?;
    let d = distributions(pointer, &state.amplitudes);
    let (x0, p0) = baseline(pointer);
    let mut rng_x = random::rng(seed, stream_id(channel, 0));
    let mut rng_p = random::rng(seed, stream_id(channel, 1));
    let (mx, sx) = sample_mean(&d.positions, &d.position_weights, samples, &mut rng_x);
    let (mp, sp) = sample_mean(&d.momenta, &d.momentum_weights, samples, &mut rng_p);
    Ok(PostselectedReadout {
        coupling: pointer.coupling,
        postselection_probability: state.probability,
        mean_position_shift: mx - x0,
        mean_momentum_shift: mp - p0,
        sample_count: samples,
        standard_errors: (sx, sp),
    })
}

fn readout(
    pointer: &PointerModel,
    branches: &[Branch],
    mode: ReadoutMode,
    channel: u64,
) -> Result<PostselectedReadout> {
    match mode {
        ReadoutMode::Exact => exact_readout(pointer, branches),
        ReadoutMode::Sampled { samples, seed } => {
            sampled_readout(pointer, branches, samples, seed, channel)
        }
    }
}

/// Exact post-selected pointer statistics after coupling to `A` at strength `pointer.coupling()`.
pub fn couple_and_postselect(
    a: &Observable,
    psi: &StateVector,
    m: &StateVector,
    pointer: &PointerModel,
    policy: Postselection,
) -> Result<PostselectedReadout> {
    check_postselection(psi, m, policy)?;
    check_displacement(pointer, a)?;
    exact_readout(pointer, &branches(a, psi, m)?)
}

/// Monte Carlo version of [`couple_and_postselect`]: `samples` position and
/// `samples` momentum readouts from independent substreams of `seed`.
pub fn sample_readouts(
    a: &Observable,
    psi: &StateVector,
    m: &StateVector,
    pointer: &PointerModel,
    policy: Postselection,
    samples: u64,
    seed: u64,
) -> Result<PostselectedReadout> {
    check_postselection(psi, m, policy)?;
    check_displacement(pointer, a)?;
    sampled_readout(pointer, &branches(a, psi, m)?, samples, seed, 0)
}

/// Geometric coupling ladder `start, start/factor, …` with `rungs` entries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingLadder {
    pub start: f64,
    pub factor: f64,
    pub rungs: usize,
}

impl CouplingLadder {
    /// `0.2σ` halved over 5 rungs.
    pub fn for_spread(spread: f64) -> Self {
        Self {
            start: 0.2 * spread,
            factor: 2.0,
            rungs: 5,
        }
    }

    pub fn couplings(&self) -> Vec<f64> {
        (0..self.rungs)
            .map(|k| self.start / self.factor.powi(k as i32))
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if !(self.start > 0.0) || !(self.factor > 1.0) || self.rungs < 2 {
            return Err(QuantumError::InvalidParameter(format!(
                "coupling ladder needs start > 0, factor > 1 and at least 2 rungs, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Leading power of the finite-coupling bias of `readout / g`.
pub const BIAS_ORDER: i32 = 2;

/// One Richardson step on the two finest rungs, eliminating the `g^BIAS_ORDER` term.
pub fn richardson<T>(coarse: T, fine: T, factor: f64) -> T
where
    T: std::ops::Mul<f64, Output = T> + std::ops::Sub<Output = T>,
{
    let r = factor.powi(BIAS_ORDER);
    fine * (r / (r - 1.0)) - coarse * (1.0 / (r - 1.0))
}

/// Pointer momentum per unit `g·Im A_w`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentumCalibration {
    pub response: f64,
    /// Weak value of the reference case, computed algebraically.
    pub reference_weak_value: C64,
}

impl MomentumCalibration {
    /// Linear response of a Gaussian pointer with `ħ = 1`: `1 / (2σ²)`.
    pub fn gaussian_linear_response(spread: f64) -> f64 {
        1.0 / (2.0 * spread * spread)
    }
}

/// Calibrates the momentum channel on a qubit reference: `A = σ_z`,
/// `ψ = (|0⟩+|1⟩)/√2` and post-selection `(|0⟩+i|1⟩)/√2`, an equal superposition
/// of eigenstates with a relative phase, whose weak value `i` is purely imaginary.
pub fn calibrate_momentum_response(
    pointer: &PointerModel,
    ladder: &CouplingLadder,
) -> Result<MomentumCalibration> {
    ladder.validate()?;
    let z = qubit::observable(&qubit::pauli_z());
    let psi = qubit::state(C64::new(1.0, 0.0), C64::new(1.0, 0.0));
    let m = qubit::plus_i();
    let reference = weak_value(&z, &psi, &m)?.value;
    let slopes = ladder
        .couplings()
        .into_iter()
        .map(|g| {
            let r = couple_and_postselect(&z, &psi, &m, &pointer.with_coupling(g)?, Postselection::Strict)?;
            Ok(r.mean_momentum_shift / g)
        })
        .collect::<Result<Vec<f64>>>()?;
    let n = slopes.len();
    let slope = richardson(slopes[n - 2], slopes[n - 1], ladder.factor);
    Ok(MomentumCalibration {
        response: slope / reference.im,
        reference_weak_value: reference,
    })
}

/// `Re = Δx/g`, `Im = Δp/(κ g)`.
pub fn weak_value_estimate(readout: &PostselectedReadout, calibration: &MomentumCalibration) -> C64 {
    let g = readout.coupling;
    C64::new(
        readout.mean_position_shift / g,
        readout.mean_momentum_shift / (calibration.response * g),
    )
}

/// Estimates along a coupling ladder and their extrapolation to `g = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeakValueLadder {
    pub couplings: Vec<f64>,
    pub readouts: Vec<PostselectedReadout>,
    pub estimates: Vec<C64>,
    pub extrapolated: C64,
}

impl WeakValueLadder {
    /// `|E(g_{k+1}) - W| / |E(g_k) - W|` for successive rungs.
    pub fn bias_ratios(&self, reference: C64) -> Vec<f64> {
        bias_ratios(&self.estimates, reference)
    }
}

pub fn bias_ratios(estimates: &[C64], reference: C64) -> Vec<f64> {
    estimates
        .windows(2)
        .map(|w| (w[1] - reference).norm() / (w[0] - reference).norm())
        .collect()
}

pub fn extrapolate_weak_value(
    a: &Observable,
    psi: &StateVector,
    m: &StateVector,
    pointer: &PointerModel,
    ladder: &CouplingLadder,
    calibration: &MomentumCalibration,
    policy: Postselection,
) -> Result<WeakValueLadder> {
    ladder.validate()?;
    check_postselection(psi, m, policy)?;
    let couplings = ladder.couplings();
    let readouts = couplings
        .iter()
        .map(|&g| {
            let p = pointer.with_coupling(g)?;
            check_displacement(&p, a)?;
            exact_readout(&p, &branches(a, psi, m)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let estimates: Vec<C64> = readouts
        .iter()
        .map(|r| weak_value_estimate(r, calibration))
        .collect();
    let n = estimates.len();
    let extrapolated = richardson(estimates[n - 2], estimates[n - 1], ladder.factor);
    Ok(WeakValueLadder {
        couplings,
        readouts,
        estimates,
        extrapolated,
    })
}

/// Estimate and readout of one `(a, b)` channel, `None` when its post-selection never succeeds.
type ChannelResult = Result<Option<(C64, PostselectedReadout)>>;

/// Direct measurement of `ρ(a,b|ψ)` at one coupling strength.
#[derive(Debug, Clone, PartialEq)]
pub struct KdEstimate {
    pub coupling: f64,
    pub estimate: ComplexJointDistribution,
    /// Row-major over `(a, b)`.
    pub readouts: Vec<Option<PostselectedReadout>>,
}

/// Weakly measures each projector `|a⟩⟨a|`, post-selects on each `|b⟩` and
/// assembles `ρ̂(a,b) = Â_w(a|b) · P(b)`.
///
/// Channels are independent; in sampled mode channel `(a, b)` draws from its
/// own substream so results do not depend on scheduling. With
/// [`Postselection::AllowRare`] a channel whose post-selection has exactly
/// zero probability contributes `0`.
pub fn direct_kd_measurement(
    a_basis: &OrthonormalBasis,
    b_basis: &OrthonormalBasis,
    psi: &StateVector,
    pointer: &PointerModel,
    calibration: &MomentumCalibration,
    mode: ReadoutMode,
    policy: Postselection,
) -> Result<KdEstimate> {
    direct_kd_channels(a_basis, b_basis, psi, pointer, calibration, mode, policy, 0)
}

#[allow(clippy::too_many_arguments)]
fn direct_kd_channels(
    a_basis: &OrthonormalBasis,
    b_basis: &OrthonormalBasis,
    psi: &StateVector,
    pointer: &PointerModel,
    calibration: &MomentumCalibration,
    mode: ReadoutMode,
    policy: Postselection,
    channel_offset: u64,
) -> Result<KdEstimate> {
    let (da, db) = (a_basis.dim(), b_basis.dim());
    if da != db {
        return Err(QuantumError::DimensionMismatch {
            expected: da,
            found: db,
        });
    }
    let projectors = (0..da)
        .map(|a| Observable::projector(a_basis, a).map(Arc::new))
        .collect::<Result<Vec<_>>>()?;
    let posts: Vec<StateVector> = b_basis.vectors().collect();

    let results: Vec<(usize, usize, ChannelResult)> = (0..da * db)
        .into_par_iter()
        .map(|idx| {
            let (a, b) = (idx / db, idx % db);
            let run = || -> ChannelResult {
                let projector = &projectors[a];
                let post = &posts[b];
                let born = post.inner(psi).norm_sqr();
                if born == 0.0 && policy == Postselection::AllowRare {
                    return Ok(None);
                }
                check_postselection(psi, post, policy)?;
                check_displacement(pointer, projector)?;
                let r = readout(pointer, &branches(projector, psi, post)?, mode, channel_offset + idx as u64)?;
                let value = weak_value_estimate(&r, calibration) * r.postselection_probability;
                Ok(Some((value, r)))
            };
            (a, b, run())
        })
        .collect();

    let mut values = CMatrix::zeros(da, db);
    let mut readouts = Vec::with_capacity(da * db);
    let mut failures = Vec::new();
    for (a, b, res) in results {
        match res {
            Ok(Some((value, r))) => {
                values[(a, b)] = value;
                readouts.push(Some(r));
            }
            Ok(None) => readouts.push(None),
            Err(error) => {
                readouts.push(None);
                failures.push(ChannelFailure {
                    label: format!("a{a},b{b}"),
                    error,
                });
            }
        }
    }
    if !failures.is_empty() {
        return Err(QuantumError::ChannelFailures(failures));
    }
    let labels_a = (0..da).map(|k| format!("a{k}")).collect();
    let labels_b = (0..db).map(|k| format!("b{k}")).collect();
    Ok(KdEstimate {
        coupling: pointer.coupling,
        estimate: ComplexJointDistribution::from_estimate(values, labels_a, labels_b)?,
        readouts,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct KdLadder {
    pub couplings: Vec<f64>,
    pub estimates: Vec<KdEstimate>,
    pub extrapolated: ComplexJointDistribution,
}

/// [`direct_kd_measurement`] along a coupling ladder, extrapolated element-wise.
#[allow(clippy::too_many_arguments)]
pub fn direct_kd_extrapolated(
    a_basis: &OrthonormalBasis,
    b_basis: &OrthonormalBasis,
    psi: &StateVector,
    pointer: &PointerModel,
    ladder: &CouplingLadder,
    calibration: &MomentumCalibration,
    mode: ReadoutMode,
    policy: Postselection,
) -> Result<KdLadder> {
    ladder.validate()?;
    let couplings = ladder.couplings();
    let channels = (a_basis.dim() * b_basis.dim()) as u64;
    let estimates = couplings
        .iter()
        .enumerate()
        .map(|(rung, &g)| {
            direct_kd_channels(
                a_basis,
                b_basis,
                psi,
                &pointer.with_coupling(g)?,
                calibration,
                mode,
                policy,
                rung as u64 * channels,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let n = estimates.len();
    let values = estimates[n - 1]
        .estimate
        .values()
        .zip_map(estimates[n - 2].estimate.values(), |fine, coarse| {
            richardson(coarse, fine, ladder.factor)
        });
    let extrapolated = ComplexJointDistribution::from_estimate(
        values,
        estimates[0].estimate.labels_a().to_vec(),
        estimates[0].estimate.labels_b().to_vec(),
    )?;
    Ok(KdLadder {
        couplings,
        estimates,
        extrapolated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::qubit::*;
    use crate::quasiprob::kd_joint;

    fn pointer(g: f64) -> PointerModel {
        PointerModel::with_defaults(1.0, g).unwrap()
    }

    #[test]
    fn pointer_validation() {
        assert!(PointerModel::new(1.0, 0.1, 128, 10.0).is_err());
        assert!(PointerModel::new(1.0, 0.1, 1024, 6.0).is_err());
        assert!(PointerModel::new(0.0, 0.1, 1024, 10.0).is_err());
        assert!(PointerModel::new(1.0, -0.1, 1024, 10.0).is_err());
        let p = pointer(0.1);
        assert_eq!(p.grid_points(), 1024);
        assert!((p.norm_sqr(&p.profile(0.0)) - 1.0).abs() < 1e-8);
        assert!((p.half_width() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn zero_coupling_leaves_pointer_unshifted() {
        let x = observable(&pauli_x());
        let (psi, m) = (zero(), plus_i());
        let r = couple_and_postselect(&x, &psi, &m, &pointer(0.0), Postselection::Strict).unwrap();
        assert!(r.mean_position_shift.abs() < 1e-14);
        assert!(r.mean_momentum_shift.abs() < 1e-14);
        assert!((r.postselection_probability - m.inner(&psi).norm_sqr()).abs() < 1e-10);
    }

    #[test]
    fn eigenstate_gives_classical_displacement() {
        let x = observable(&pauli_x());
        for k in 0..2 {
            let v = x.eigenbasis().vector(k);
            for g in [0.01, 0.05, 0.3] {
                let r = couple_and_postselect(&x, &v, &v, &pointer(g), Postselection::Strict).unwrap();
                let want = g * x.eigenvalues()[k];
                assert!((r.mean_position_shift - want).abs() < 1e-12, "{g}: {r:?}");
                assert!(r.mean_momentum_shift.abs() < 1e-12);
                assert!((r.postselection_probability - 1.0).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn errors_for_orthogonal_and_coarse() {
        let z = observable(&pauli_z());
        assert!(matches!(
            couple_and_postselect(&z, &zero(), &one(), &pointer(0.1), Postselection::Strict),
            Err(QuantumError::OrthogonalPostselection { .. })
        ));
        assert!(matches!(
            couple_and_postselect(&z, &zero(), &plus_i(), &pointer(6.0), Postselection::Strict),
            Err(QuantumError::GridTooCoarse { .. })
        ));
    }

    #[test]
    fn rare_postselection_opt_in() {
        let z = observable(&pauli_z());
        let eps = 1e-7;
        let psi = state(C64::new(1.0, 0.0), C64::new(eps, 0.0));
        let m = one();
        assert!(couple_and_postselect(&z, &psi, &m, &pointer(0.1), Postselection::Strict).is_err());
        let r = couple_and_postselect(&z, &psi, &m, &pointer(0.1), Postselection::AllowRare).unwrap();
        assert!((r.postselection_probability - m.inner(&psi).norm_sqr()).abs() < 1e-20);
    }

    #[test]
    fn calibration_matches_linear_response() {
        for spread in [0.5, 1.0, 2.0] {
            let p = PointerModel::with_defaults(spread, 0.0).unwrap();
            let cal = calibrate_momentum_response(&p, &CouplingLadder::for_spread(spread)).unwrap();
            let theory = MomentumCalibration::gaussian_linear_response(spread);
            assert!((cal.response / theory - 1.0).abs() < 1e-6, "{spread}: {cal:?}");
            assert!((cal.reference_weak_value - C64::new(0.0, 1.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn weak_value_ladder_converges() {
        let x = observable(&pauli_x());
        let (psi, m) = (zero(), plus_i());
        let p = pointer(0.0);
        let ladder = CouplingLadder::for_spread(1.0);
        let cal = calibrate_momentum_response(&p, &ladder).unwrap();
        let res = extrapolate_weak_value(&x, &psi, &m, &p, &ladder, &cal, Postselection::Strict).unwrap();
        let ideal = C64::new(0.0, -1.0);
        assert!((res.extrapolated - ideal).norm() < 1e-6, "{:?}", res.extrapolated);
        for ratio in res.bias_ratios(ideal) {
            assert!(ratio <= 0.6, "{ratio}");
        }
    }

    #[test]
    fn sampling_is_deterministic_and_consistent() {
        let x = observable(&pauli_x());
        let (psi, m) = (zero(), plus_i());
        let p = pointer(0.2);
        let a = sample_readouts(&x, &psi, &m, &p, Postselection::Strict, 20_000, 11).unwrap();
        let b = sample_readouts(&x, &psi, &m, &p, Postselection::Strict, 20_000, 11).unwrap();
        assert_eq!(a, b);
        let exact = couple_and_postselect(&x, &psi, &m, &p, Postselection::Strict).unwrap();
        let zx = (a.mean_position_shift - exact.mean_position_shift) / a.standard_errors.0;
        let zp = (a.mean_momentum_shift - exact.mean_momentum_shift) / a.standard_errors.1;
        assert!(zx.abs() < 5.0 && zp.abs() < 5.0, "{zx} {zp}");
        assert_eq!(a.sample_count, 20_000);
        assert!(sample_readouts(&x, &psi, &m, &p, Postselection::Strict, 0, 1).is_err());
        let single = sample_readouts(&x, &psi, &m, &p, Postselection::Strict, 1, 1).unwrap();
        assert!(single.standard_errors.0 > 0.0);
    }

    #[test]
    fn direct_kd_on_basis_state_concentrates_on_one_row() {
        let p = pointer(0.0);
        let ladder = CouplingLadder::for_spread(1.0);
        let cal = calibrate_momentum_response(&p, &ladder).unwrap();
        let res = direct_kd_extrapolated(
            &z_basis(),
            &x_basis(),
            &zero(),
            &p,
            &ladder,
            &cal,
            ReadoutMode::Exact,
            Postselection::Strict,
        )
        .unwrap();
        let v = res.extrapolated.values();
        for b in 0..2 {
            assert!((v[(0, b)] - C64::new(0.5, 0.0)).norm() < 1e-6);
            assert!(v[(1, b)].norm() < 1e-6);
        }
    }

    #[test]
    fn direct_kd_bias_shrinks_with_coupling() {
        let psi = plus_i();
        let exact = kd_joint(&z_basis(), &x_basis(), &psi).unwrap();
        let p = pointer(0.0);
        let cal = calibrate_momentum_response(&p, &CouplingLadder::for_spread(1.0)).unwrap();
        let bias = |g: f64| {
            let est = direct_kd_measurement(
                &z_basis(),
                &x_basis(),
                &psi,
                &p.with_coupling(g).unwrap(),
                &cal,
                ReadoutMode::Exact,
                Postselection::Strict,
            )
            .unwrap();
            est.estimate.max_deviation(&exact)
        };
        let (b1, b2) = (bias(0.1), bias(0.05));
        assert!(b1 < 0.01 && b2 <= 0.6 * b1, "{b1} {b2}");
    }

    #[test]
    fn rare_channel_contributes_zero() {
        // ψ = |0⟩ with b-basis = z: post-selecting on |1⟩ never happens
        let p = pointer(0.05);
        let cal = MomentumCalibration {
            response: MomentumCalibration::gaussian_linear_response(1.0),
            reference_weak_value: C64::new(0.0, 1.0),
        };
        let strict = direct_kd_measurement(
            &x_basis(),
            &z_basis(),
            &zero(),
            &p,
            &cal,
            ReadoutMode::Exact,
            Postselection::Strict,
        );
        match strict {
            Err(QuantumError::ChannelFailures(f)) => {
                assert_eq!(f.len(), 2);
                assert_eq!(f[0].label, "a0,b1");
            }
            other => panic!("expected channel failures, got {other:?}"),
        }
        let rare = direct_kd_measurement(
            &x_basis(),
            &z_basis(),
            &zero(),
            &p,
            &cal,
            ReadoutMode::Exact,
            Postselection::AllowRare,
        )
        .unwrap();
        assert_eq!(rare.estimate.get(0, 1), C64::new(0.0, 0.0));
        assert!(rare.readouts[1].is_none());
    }
}

//! Scenario documents: parsing, defaults and operand validation.

use std::collections::BTreeMap;
use std::path::Path;

use kdq_core::hilbert::hermiticity_deviation;
use kdq_core::{
    spectral_decompose_with, CMatrix, CVector, Degeneracy, Observable, OrthonormalBasis,
    StateVector, C64,
};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// A complex number as `[re, im]`.
pub type Pair = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    IdentitySuite,
    KdDistribution,
    WeakMeasurement,
    DirectKd,
    Dynamics,
    Propagator,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 6] = [
        ScenarioKind::IdentitySuite,
        ScenarioKind::KdDistribution,
        ScenarioKind::WeakMeasurement,
        ScenarioKind::DirectKd,
        ScenarioKind::Dynamics,
        ScenarioKind::Propagator,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::IdentitySuite => "identity-suite",
            ScenarioKind::KdDistribution => "kd-distribution",
            ScenarioKind::WeakMeasurement => "weak-measurement",
            ScenarioKind::DirectKd => "direct-kd",
            ScenarioKind::Dynamics => "dynamics",
            ScenarioKind::Propagator => "propagator",
        }
    }

    pub fn summary(self) -> &'static str {
        match self {
            ScenarioKind::IdentitySuite => {
                "second moment, uncertainty, commutator, cyclic, Born and reconstruction identities"
            }
            ScenarioKind::KdDistribution => "Kirkwood-Dirac distribution with marginals and witnesses",
            ScenarioKind::WeakMeasurement => "pointer simulation of a weak value on a coupling ladder",
            ScenarioKind::DirectKd => "weak-then-strong measurement of a full KD distribution",
            ScenarioKind::Dynamics => "equation-of-motion identity and two-time position correlation",
            ScenarioKind::Propagator => "lattice free-particle complex propagator and coarse-graining",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Constants {
    #[serde(default = "one")]
    pub hbar: f64,
    #[serde(default = "one")]
    pub mass: f64,
    /// Lattice length; defaults to the dimension.
    #[serde(default)]
    pub length: Option<f64>,
}

fn one() -> f64 {
    1.0
}

impl Default for Constants {
    fn default() -> Self {
        Self {
            hbar: 1.0,
            mass: 1.0,
            length: None,
        }
    }
}

/// Named operands. Matrices are row-major; bases are lists of vectors.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Operands {
    #[serde(default)]
    pub states: BTreeMap<String, Vec<Pair>>,
    #[serde(default)]
    pub observables: BTreeMap<String, Vec<Vec<Pair>>>,
    #[serde(default)]
    pub bases: BTreeMap<String, Vec<Vec<Pair>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderConfig {
    pub start: f64,
    pub factor: f64,
    pub rungs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropagatorPoint {
    pub x0_index: usize,
    /// Wavenumber `k` in `[-d/2, d/2)`; momentum `2πħk/L`.
    pub p0_wavenumber: i64,
    pub t: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    /// Random instances per dimension.
    #[serde(default)]
    pub instances: Option<usize>,
    /// Dimensions swept by the identity suite; defaults to `[dimension]`.
    #[serde(default)]
    pub dimensions: Option<Vec<usize>>,
    #[serde(default)]
    pub g_ladder: Option<LadderConfig>,
    /// Monte Carlo readouts per channel; absent means exact readouts.
    #[serde(default)]
    pub samples: Option<u64>,
    #[serde(default)]
    pub dt_ladder: Option<Vec<f64>>,
    /// `[t1, t2]` pairs for the two-time correlation.
    #[serde(default)]
    pub windows: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub oscillator_dimension: Option<usize>,
    #[serde(default)]
    pub points: Option<Vec<PropagatorPoint>>,
    /// Coarse-graining kernel width in position units.
    #[serde(default)]
    pub kernel_width: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointerConfig {
    #[serde(default = "one")]
    pub spread: f64,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default = "default_half_width")]
    pub half_width: f64,
}

fn default_grid_points() -> usize {
    kdq_core::weakmeas::DEFAULT_GRID_POINTS
}

fn default_half_width() -> f64 {
    kdq_core::weakmeas::DEFAULT_HALF_WIDTH
}

impl Default for PointerConfig {
    fn default() -> Self {
        Self {
            spread: 1.0,
            grid_points: default_grid_points(),
            half_width: default_half_width(),
        }
    }
}

/// Per-check tolerances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToleranceConfig {
    pub identity: f64,
    pub cyclic: f64,
    pub normalization: f64,
    pub weak_value: f64,
    pub bias_ratio: f64,
    pub direct_kd: f64,
    pub slope: f64,
    pub two_time_relative: f64,
    pub two_time_absolute: f64,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self {
            identity: 1e-10,
            cyclic: 1e-12,
            normalization: 1e-10,
            weak_value: 1e-3,
            bias_ratio: 0.6,
            direct_kd: 1e-6,
            slope: 0.3,
            two_time_relative: 1e-3,
            two_time_absolute: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub kind: ScenarioKind,
    #[serde(default)]
    pub dimension: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub constants: Constants,
    #[serde(default)]
    pub operands: Operands,
    #[serde(default)]
    pub sweep: Sweep,
    #[serde(default)]
    pub pointer: PointerConfig,
    #[serde(default)]
    pub tolerances: ToleranceConfig,
}

fn invalid(path: impl Into<String>, message: impl Into<String>) -> CliError {
    CliError::ConfigInvalid {
        path: path.into(),
        message: message.into(),
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| invalid("$", e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Dimension implied by the config: explicit, or read off the first operand.
    fn inferred_dimension(&self) -> Option<usize> {
        self.dimension
            .or_else(|| self.operands.states.values().next().map(Vec::len))
            .or_else(|| self.operands.observables.values().next().map(Vec::len))
            .or_else(|| self.operands.bases.values().next().map(Vec::len))
    }

    /// Fills every defaulted field so the echo in a report is complete.
    pub fn resolved(mut self) -> Result<Self> {
        let d = match self.kind {
            ScenarioKind::Propagator => self.dimension.unwrap_or(256),
            ScenarioKind::Dynamics if self.sweep.instances == Some(0) => {
                self.dimension.unwrap_or(2)
            }
            _ => self
                .inferred_dimension()
                .ok_or_else(|| invalid("dimension", "required when no operands are given"))?,
        };
        self.dimension = Some(d);
        let s = &mut self.sweep;
        match self.kind {
            ScenarioKind::IdentitySuite => {
                s.instances.get_or_insert(100);
                s.dimensions.get_or_insert_with(|| vec![d]);
            }
            ScenarioKind::KdDistribution => {
                s.instances.get_or_insert(1);
            }
            ScenarioKind::WeakMeasurement | ScenarioKind::DirectKd => {
                let sigma = self.pointer.spread;
                s.g_ladder.get_or_insert(LadderConfig {
                    start: 0.2 * sigma,
                    factor: 2.0,
                    rungs: 5,
                });
                s.instances.get_or_insert(1);
            }
            ScenarioKind::Dynamics => {
                s.instances.get_or_insert(1);
                s.dt_ladder.get_or_insert_with(|| vec![1e-2, 5e-3, 2.5e-3]);
                s.windows.get_or_insert_with(Vec::new);
                s.oscillator_dimension.get_or_insert(64);
            }
            ScenarioKind::Propagator => {
                self.constants.length.get_or_insert(d as f64);
                let length = self.constants.length.unwrap_or(d as f64);
                s.kernel_width.get_or_insert(8.0 * length / d as f64);
                s.points.get_or_insert_with(|| default_points(d, length));
            }
        }
        self.validate_scalars()?;
        Ok(self)
    }

    fn validate_scalars(&self) -> Result<()> {
        let positive = |path: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(path, format!("must be positive and finite, got {v}")))
            }
        };
        positive("constants.hbar", self.constants.hbar)?;
        positive("constants.mass", self.constants.mass)?;
        if let Some(l) = self.constants.length {
            positive("constants.length", l)?;
        }
        positive("pointer.spread", self.pointer.spread)?;
        if let Some(d) = self.dimension {
            if d < 2 {
                return Err(invalid("dimension", format!("must be at least 2, got {d}")));
            }
        }
        if let Some(dims) = &self.sweep.dimensions {
            if let Some((i, d)) = dims.iter().enumerate().find(|(_, &d)| d < 2) {
                return Err(invalid(format!("sweep.dimensions[{i}]"), format!("must be at least 2, got {d}")));
            }
        }
        if let Some(l) = &self.sweep.g_ladder {
            positive("sweep.g_ladder.start", l.start)?;
            if l.factor.is_nan() || l.factor <= 1.0 || l.rungs < 2 {
                return Err(invalid("sweep.g_ladder", "needs factor > 1 and at least 2 rungs"));
            }
        }
        if let Some(dts) = &self.sweep.dt_ladder {
            for (i, &dt) in dts.iter().enumerate() {
                positive(&format!("sweep.dt_ladder[{i}]"), dt)?;
            }
        }
        if let Some(w) = self.sweep.kernel_width {
            positive("sweep.kernel_width", w)?;
        }
        let t = &self.tolerances;
        for (name, v) in [
            ("identity", t.identity),
            ("cyclic", t.cyclic),
            ("normalization", t.normalization),
            ("weak_value", t.weak_value),
            ("bias_ratio", t.bias_ratio),
            ("direct_kd", t.direct_kd),
            ("slope", t.slope),
            ("two_time_relative", t.two_time_relative),
            ("two_time_absolute", t.two_time_absolute),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(format!("tolerances.{name}"), format!("must be non-negative, got {v}")));
            }
        }
        Ok(())
    }

    /// Parses every operand into its checked type, reporting the first failure.
    pub fn operand_set(&self) -> Result<OperandSet> {
        let d = self.dimension;
        let mut set = OperandSet::default();
        for (name, amps) in &self.operands.states {
            set.states.insert(name.clone(), parse_state(&format!("operands.states.{name}"), amps, d)?);
        }
        for (name, rows) in &self.operands.observables {
            set.observables.insert(
                name.clone(),
                parse_observable(&format!("operands.observables.{name}"), rows, d)?,
            );
        }
        for (name, vectors) in &self.operands.bases {
            set.bases.insert(name.clone(), parse_basis(&format!("operands.bases.{name}"), vectors, d)?);
        }
        Ok(set)
    }

    /// Resolves defaults and checks every operand.
    pub fn validate(self) -> Result<(Self, OperandSet)> {
        let resolved = self.resolved()?;
        let operands = resolved.operand_set()?;
        Ok((resolved, operands))
    }
}

fn default_points(d: usize, length: f64) -> Vec<PropagatorPoint> {
    let x0_index = d / 4;
    let mut points = Vec::new();
    // πt stays below L/2 so the lattice chirp does not wrap
    for k in [-(d as i64) / 6, (d as i64) / 12, (d as i64) / 4] {
        for frac in [0.25, 0.6, 0.95] {
            points.push(PropagatorPoint {
                x0_index,
                p0_wavenumber: k,
                t: frac * length / (2.0 * std::f64::consts::PI),
            });
        }
    }
    points
}

#[derive(Debug, Clone, Default)]
pub struct OperandSet {
    pub states: BTreeMap<String, StateVector>,
    pub observables: BTreeMap<String, Observable>,
    pub bases: BTreeMap<String, OrthonormalBasis>,
}

fn pair(p: &Pair) -> C64 {
    C64::new(p[0], p[1])
}

fn check_len(path: &str, len: usize, d: Option<usize>) -> Result<()> {
    match d {
        Some(d) if d != len => Err(invalid(path, format!("expected dimension {d}, found {len}"))),
        _ if len < 2 => Err(invalid(path, format!("dimension must be at least 2, found {len}"))),
        _ => Ok(()),
    }
}

fn check_finite(path: &str, values: &[Pair]) -> Result<()> {
    if values.iter().flatten().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(invalid(path, "entries must be finite"))
    }
}

/// States are normalized on load.
pub fn parse_state(path: &str, amps: &[Pair], d: Option<usize>) -> Result<StateVector> {
    check_len(path, amps.len(), d)?;
    check_finite(path, amps)?;
    StateVector::normalize_vector(CVector::from_iterator(amps.len(), amps.iter().map(pair)))
        .map_err(|e| invalid(path, e.to_string()))
}

pub fn parse_matrix(path: &str, rows: &[Vec<Pair>], d: Option<usize>) -> Result<CMatrix> {
    check_len(path, rows.len(), d)?;
    let n = rows.len();
    for (i, row) in rows.iter().enumerate() {
        let row_path = format!("{path}[{i}]");
        if row.len() != n {
            return Err(invalid(row_path, format!("row has {} entries, expected {n}", row.len())));
        }
        check_finite(&row_path, row)?;
    }
    Ok(CMatrix::from_fn(n, n, |i, j| pair(&rows[i][j])))
}

pub fn parse_observable(path: &str, rows: &[Vec<Pair>], d: Option<usize>) -> Result<Observable> {
    let m = parse_matrix(path, rows, d)?;
    let tol = kdq_core::Tolerances::DEFAULT.hermiticity;
    let dev = hermiticity_deviation(&m);
    if dev > tol {
        return Err(invalid(path, format!("matrix is not Hermitian (deviation {dev:e})")));
    }
    spectral_decompose_with(&m, tol, Degeneracy::Allow).map_err(|e| invalid(path, e.to_string()))
}

/// Basis vectors are normalized, then checked for orthogonality.
pub fn parse_basis(path: &str, vectors: &[Vec<Pair>], d: Option<usize>) -> Result<OrthonormalBasis> {
    check_len(path, vectors.len(), d)?;
    let states = vectors
        .iter()
        .enumerate()
        .map(|(k, v)| parse_state(&format!("{path}[{k}]"), v, Some(vectors.len())))
        .collect::<Result<Vec<_>>>()?;
    OrthonormalBasis::from_vectors(&states).map_err(|e| invalid(path, e.to_string()))
}

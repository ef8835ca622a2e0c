//! Scenario execution.

use std::time::Instant;

use kdq_core::dynamics::{
    coarse_grain, free_propagator_conditional, modular_distance, motion_identity_ladder,
    two_time_imag_correlation, LatticeParticle, TruncatedOscillatorPair,
};
use kdq_core::hilbert::max_abs_diff;
use kdq_core::quasiprob::{
    commutator_imag_identity, kd_joint, kd_three_way, predict_born, reconstruct_operator,
    second_moment_identity, uncertainty_bound_check, universal_conditional, weak_value,
};
use kdq_core::random::{perturbed_mub_pair, random_basis, random_observable, random_state, rng};
use kdq_core::weakmeas::{
    calibrate_momentum_response, direct_kd_extrapolated, extrapolate_weak_value, sample_readouts,
    weak_value_estimate, CouplingLadder, MomentumCalibration, PointerModel, PostselectedReadout,
    Postselection, ReadoutMode, BIAS_ORDER,
};
use kdq_core::{Observable, OrthonormalBasis, QuantumError, StateVector, C64};
use rand_chacha::ChaCha8Rng;

use crate::config::{OperandSet, ScenarioConfig, ScenarioKind};
use crate::error::{CliError, Result};
use crate::report::{
    pair, CheckRecord, DistributionRecord, ErrorRecord, PropagatorRecord, ReadoutRecord, Relation,
    Report, Timing,
};

/// Mutually-unbiased perturbation strength for random `(a, b)` basis pairs.
const MUB_PERTURBATION: f64 = 0.3;

/// A domain error and the stage that raised it.
struct Failure {
    context: String,
    source: QuantumError,
}

type Step<T> = std::result::Result<T, Failure>;

trait Context<T> {
    fn at(self, context: &str) -> Step<T>;
}

impl<T> Context<T> for kdq_core::Result<T> {
    fn at(self, context: &str) -> Step<T> {
        self.map_err(|source| Failure {
            context: context.to_string(),
            source,
        })
    }
}

fn invalid(path: impl Into<String>, message: impl Into<String>) -> CliError {
    CliError::ConfigInvalid {
        path: path.into(),
        message: message.into(),
    }
}

/// Validates `config` and runs it. Configuration problems are returned as
/// errors before anything is computed; domain failures are recorded in the report.
pub fn run_scenario(config: ScenarioConfig) -> Result<Report> {
    let (config, operands) = validate_scenario(config)?;
    let started = Instant::now();
    let mut report = Report::new(config.clone());
    let outcome = match config.kind {
        ScenarioKind::IdentitySuite => identity_suite(&config, &operands, &mut report),
        ScenarioKind::KdDistribution => kd_distribution(&config, &operands, &mut report),
        ScenarioKind::WeakMeasurement => weak_measurement(&config, &operands, &mut report),
        ScenarioKind::DirectKd => direct_kd(&config, &operands, &mut report),
        ScenarioKind::Dynamics => dynamics(&config, &operands, &mut report),
        ScenarioKind::Propagator => propagator(&config, &mut report),
    };
    if let Err(f) = outcome {
        report.error = Some(ErrorRecord {
            scenario: config.name.clone(),
            context: f.context,
            message: f.source.to_string(),
        });
    }
    report.passed = report.error.is_none() && report.checks.iter().all(|c| c.pass);
    report.timing = Some(Timing {
        elapsed_seconds: started.elapsed().as_secs_f64(),
    });
    Ok(report)
}

/// Everything `run_scenario` checks before computing.
pub fn validate_scenario(config: ScenarioConfig) -> Result<(ScenarioConfig, OperandSet)> {
    let (config, operands) = config.validate()?;
    check_roles(&config, &operands)?;
    Ok((config, operands))
}

/// Operand names each scenario kind reads.
fn roles(kind: ScenarioKind) -> (&'static [&'static str], &'static [&'static str], &'static [&'static str]) {
    match kind {
        ScenarioKind::IdentitySuite => (&["psi"], &["A", "B", "M"], &["a", "b", "m"]),
        ScenarioKind::KdDistribution => (&["psi"], &["A", "B"], &["a", "b"]),
        ScenarioKind::WeakMeasurement => (&["psi", "post"], &["A"], &[]),
        ScenarioKind::DirectKd => (&["psi"], &["A", "B"], &["a", "b"]),
        ScenarioKind::Dynamics => (&["psi"], &["A", "H"], &[]),
        ScenarioKind::Propagator => (&[], &[], &[]),
    }
}

fn check_roles(config: &ScenarioConfig, ops: &OperandSet) -> Result<()> {
    let (states, observables, bases) = roles(config.kind);
    let unknown = |group: &str, names: Vec<&String>, allowed: &[&str]| -> Result<()> {
        match names.into_iter().find(|n| !allowed.contains(&n.as_str())) {
            Some(n) => Err(invalid(
                format!("operands.{group}.{n}"),
                format!("not used by {} (expected one of {allowed:?})", config.kind.name()),
            )),
            None => Ok(()),
        }
    };
    unknown("states", ops.states.keys().collect(), states)?;
    unknown("observables", ops.observables.keys().collect(), observables)?;
    unknown("bases", ops.bases.keys().collect(), bases)?;
    let has_operands = !(ops.states.is_empty() && ops.observables.is_empty() && ops.bases.is_empty());
    if config.kind == ScenarioKind::IdentitySuite && has_operands {
        let dims = config.sweep.dimensions.as_deref().unwrap_or_default();
        if dims != [config.dimension.unwrap_or_default()] {
            return Err(invalid("sweep.dimensions", "explicit operands fix a single dimension"));
        }
    }
    if config.kind == ScenarioKind::WeakMeasurement {
        for (group, name, present) in [
            ("observables", "A", ops.observables.contains_key("A")),
            ("states", "psi", ops.states.contains_key("psi")),
            ("states", "post", ops.states.contains_key("post")),
        ] {
            if !present {
                return Err(invalid(format!("operands.{group}.{name}"), "required"));
            }
        }
    }
    if config.kind == ScenarioKind::Propagator {
        let d = config.dimension.unwrap_or_default();
        for (i, p) in config.sweep.points.iter().flatten().enumerate() {
            let path = format!("sweep.points[{i}]");
            if p.x0_index >= d {
                return Err(invalid(path, format!("x0_index {} outside {d} sites", p.x0_index)));
            }
            let half = (d / 2) as i64;
            if p.p0_wavenumber < -half || p.p0_wavenumber >= half {
                return Err(invalid(path, format!("p0_wavenumber {} outside [-{half}, {half})", p.p0_wavenumber)));
            }
            if !p.t.is_finite() {
                return Err(invalid(path, "t must be finite"));
            }
        }
    }
    if config.kind == ScenarioKind::Dynamics && config.sweep.oscillator_dimension.is_some_and(|d| d < 4) {
        return Err(invalid("sweep.oscillator_dimension", "must be at least 4"));
    }
    Ok(())
}

fn state_or_random(ops: &OperandSet, name: &str, d: usize, r: &mut ChaCha8Rng) -> StateVector {
    ops.states.get(name).cloned().unwrap_or_else(|| random_state(d, r))
}

fn observable_or_random(ops: &OperandSet, name: &str, d: usize, r: &mut ChaCha8Rng) -> Observable {
    ops.observables.get(name).cloned().unwrap_or_else(|| random_observable(d, r))
}

fn basis_or_random(ops: &OperandSet, name: &str, d: usize, r: &mut ChaCha8Rng) -> OrthonormalBasis {
    ops.bases.get(name).cloned().unwrap_or_else(|| random_basis(d, r))
}

/// Basis from `bases.{basis}`, else the eigenbasis of `observables.{observable}`.
fn named_basis(ops: &OperandSet, basis: &str, observable: &str) -> Option<OrthonormalBasis> {
    ops.bases
        .get(basis)
        .cloned()
        .or_else(|| ops.observables.get(observable).map(|o| o.eigenbasis().clone()))
}

/// `(a, b)` pair from operands, falling back to a perturbed mutually unbiased pair.
fn ab_pair(ops: &OperandSet, d: usize, r: &mut ChaCha8Rng) -> (OrthonormalBasis, OrthonormalBasis) {
    let (ra, rb) = perturbed_mub_pair(d, MUB_PERTURBATION, r);
    (
        named_basis(ops, "a", "A").unwrap_or(ra),
        named_basis(ops, "b", "B").unwrap_or(rb),
    )
}

fn stream(d: usize, instance: usize) -> u64 {
    ((d as u64) << 32) | instance as u64
}

fn born_deviation(predicted: &[f64], born: &[f64]) -> f64 {
    predicted
        .iter()
        .zip(born)
        .map(|(p, b)| (p - b).abs())
        .fold(0.0, f64::max)
}

fn identity_suite(cfg: &ScenarioConfig, ops: &OperandSet, report: &mut Report) -> Step<()> {
    let tol = cfg.tolerances;
    let instances = cfg.sweep.instances.unwrap_or(1);
    for &d in cfg.sweep.dimensions.as_deref().unwrap_or_default() {
        for i in 0..instances {
            let r = &mut rng(cfg.seed, stream(d, i));
            let psi = state_or_random(ops, "psi", d, r);
            let a = observable_or_random(ops, "A", d, r);
            let b = observable_or_random(ops, "B", d, r);
            let m_obs = observable_or_random(ops, "M", d, r);
            let m = basis_or_random(ops, "m", d, r);
            let (ba, bb) = {
                let (ra, rb) = perturbed_mub_pair(d, MUB_PERTURBATION, r);
                (ops.bases.get("a").cloned().unwrap_or(ra), ops.bases.get("b").cloned().unwrap_or(rb))
            };
            let tag = format!("d{d}/{i}");

            let name = format!("second-moment/{tag}");
            let chk = second_moment_identity(&a, &psi, &m).at(&name)?;
            report.checks.push(CheckRecord::eq(name, chk.lhs, chk.rhs, tol.identity));

            let name = format!("uncertainty/{tag}");
            let unc = uncertainty_bound_check(&a, &b, &psi).at(&name)?;
            report
                .checks
                .push(CheckRecord::new(name, Relation::Ge, unc.delta_a * unc.delta_b, unc.bound, tol.identity));

            let name = format!("commutator/{tag}");
            let chk = commutator_imag_identity(&a, &b, &psi).at(&name)?;
            report.checks.push(CheckRecord::eq(name, chk.lhs, chk.rhs, tol.identity));

            let name = format!("cyclic/{tag}");
            let t = kd_three_way(&ba, &bb, &m).at(&name)?;
            report.checks.push(CheckRecord::eq(name, t.cyclic_deviation(), 0.0, tol.cyclic));

            let name = format!("born/{tag}");
            let p = universal_conditional(m_obs.eigenbasis(), &ba, &bb).at(&name)?;
            let rho = kd_joint(&ba, &bb, &psi).at(&name)?;
            let predicted = predict_born(&p, &rho).at(&name)?;
            let born = m_obs.eigenbasis().born_probabilities(&psi).at(&name)?;
            report
                .checks
                .push(CheckRecord::eq(name, born_deviation(&predicted, &born), 0.0, tol.identity));

            let name = format!("reconstruction/{tag}");
            let rebuilt = reconstruct_operator(m_obs.eigenvalues(), &p, &ba, &bb).at(&name)?;
            report
                .checks
                .push(CheckRecord::eq(name, max_abs_diff(&rebuilt, m_obs.matrix()), 0.0, tol.identity));
        }
    }
    Ok(())
}

fn kd_distribution(cfg: &ScenarioConfig, ops: &OperandSet, report: &mut Report) -> Step<()> {
    let d = cfg.dimension.unwrap_or_default();
    let tol = cfg.tolerances;
    for i in 0..cfg.sweep.instances.unwrap_or(1) {
        let r = &mut rng(cfg.seed, stream(d, i));
        let psi = state_or_random(ops, "psi", d, r);
        let (a, b) = ab_pair(ops, d, r);
        let name = format!("kd/{i}");
        let rho = kd_joint(&a, &b, &psi).at(&name)?;
        let born_a = a.born_probabilities(&psi).at(&name)?;
        let born_b = b.born_probabilities(&psi).at(&name)?;
        let dev = |m: Vec<C64>, born: &[f64]| {
            m.iter()
                .zip(born)
                .map(|(x, &y)| (x - C64::new(y, 0.0)).norm())
                .fold(0.0, f64::max)
        };
        report
            .checks
            .push(CheckRecord::eq(format!("{name}/marginal-a"), dev(rho.marginal_a(), &born_a), 0.0, tol.identity));
        report
            .checks
            .push(CheckRecord::eq(format!("{name}/marginal-b"), dev(rho.marginal_b(), &born_b), 0.0, tol.identity));
        report.checks.push(CheckRecord::eq(
            format!("{name}/total"),
            (rho.total() - C64::new(1.0, 0.0)).norm(),
            0.0,
            tol.normalization,
        ));
        report.distributions.push(DistributionRecord::from_distribution(name, &rho));
    }
    Ok(())
}

fn pointer_and_ladder(cfg: &ScenarioConfig) -> Step<(PointerModel, CouplingLadder)> {
    let l = cfg.sweep.g_ladder.expect("resolved");
    let ladder = CouplingLadder {
        start: l.start,
        factor: l.factor,
        rungs: l.rungs,
    };
    let p = &cfg.pointer;
    let pointer = PointerModel::new(p.spread, l.start, p.grid_points, p.half_width).at("pointer")?;
    Ok((pointer, ladder))
}

fn readout_record(
    name: String,
    r: &PostselectedReadout,
    spread: f64,
    seed: Option<u64>,
    cal: &MomentumCalibration,
) -> ReadoutRecord {
    ReadoutRecord {
        name,
        coupling: r.coupling,
        spread,
        seed,
        samples: r.sample_count,
        postselection_probability: r.postselection_probability,
        mean_position_shift: r.mean_position_shift,
        mean_momentum_shift: r.mean_momentum_shift,
        standard_errors: [r.standard_errors.0, r.standard_errors.1],
        estimate: pair(weak_value_estimate(r, cal)),
    }
}

/// z-score bound for Monte Carlo checks.
const Z_BOUND: f64 = 5.0;

fn weak_measurement(cfg: &ScenarioConfig, ops: &OperandSet, report: &mut Report) -> Step<()> {
    let tol = cfg.tolerances;
    let a = &ops.observables["A"];
    let psi = &ops.states["psi"];
    let post = &ops.states["post"];
    let (pointer, ladder) = pointer_and_ladder(cfg)?;
    let spread = pointer.spread();

    let cal = calibrate_momentum_response(&pointer, &ladder).at("calibration")?;
    let linear = MomentumCalibration::gaussian_linear_response(spread);
    report
        .checks
        .push(CheckRecord::eq("calibration", cal.response, linear, tol.weak_value * linear));

    let w = weak_value(a, psi, post).at("weak-value")?.value;
    let lad = extrapolate_weak_value(a, psi, post, &pointer, &ladder, &cal, Postselection::Strict)
        .at("ladder")?;
    let scale = 1.0 + w.norm();
    report
        .checks
        .push(CheckRecord::eq("weak-value/re", lad.extrapolated.re, w.re, tol.weak_value * scale));
    report
        .checks
        .push(CheckRecord::eq("weak-value/im", lad.extrapolated.im, w.im, tol.weak_value * scale));
    for (k, ratio) in lad.bias_ratios(w).into_iter().enumerate() {
        report.checks.push(CheckRecord::new(
            format!("bias-ratio/{k}"),
            Relation::Le,
            ratio,
            tol.bias_ratio,
            0.0,
        ));
    }
    for (k, r) in lad.readouts.iter().enumerate() {
        report.readouts.push(readout_record(format!("exact/g{k}"), r, spread, None, &cal));
    }

    if let Some(n) = cfg.sweep.samples {
        for (k, (&g, exact)) in lad.couplings.iter().zip(&lad.readouts).enumerate() {
            let name = format!("sampled/g{k}");
            let seed = cfg.seed.wrapping_add(k as u64);
            let p = pointer.with_coupling(g).at(&name)?;
            let s = sample_readouts(a, psi, post, &p, Postselection::Strict, n, seed).at(&name)?;
            let zx = (s.mean_position_shift - exact.mean_position_shift) / s.standard_errors.0;
            let zp = (s.mean_momentum_shift - exact.mean_momentum_shift) / s.standard_errors.1;
            report
                .checks
                .push(CheckRecord::new(format!("{name}/z-position"), Relation::Le, zx.abs(), Z_BOUND, 0.0));
            report
                .checks
                .push(CheckRecord::new(format!("{name}/z-momentum"), Relation::Le, zp.abs(), Z_BOUND, 0.0));
            report.readouts.push(readout_record(name, &s, spread, Some(seed), &cal));
        }
    }
    Ok(())
}

fn direct_kd(cfg: &ScenarioConfig, ops: &OperandSet, report: &mut Report) -> Step<()> {
    let d = cfg.dimension.unwrap_or_default();
    let tol = cfg.tolerances;
    let r = &mut rng(cfg.seed, stream(d, 0));
    let psi = state_or_random(ops, "psi", d, r);
    let a = named_basis(ops, "a", "A").unwrap_or_else(|| random_basis(d, r));
    let b = named_basis(ops, "b", "B").unwrap_or_else(|| random_basis(d, r));
    let (pointer, ladder) = pointer_and_ladder(cfg)?;
    let spread = pointer.spread();
    let cal = calibrate_momentum_response(&pointer, &ladder).at("calibration")?;
    let mode = match cfg.sweep.samples {
        Some(samples) => ReadoutMode::Sampled {
            samples,
            seed: cfg.seed,
        },
        None => ReadoutMode::Exact,
    };
    let exact = kd_joint(&a, &b, &psi).at("kd")?;
    let kd = direct_kd_extrapolated(&a, &b, &psi, &pointer, &ladder, &cal, mode, Postselection::Strict)
        .at("direct-kd")?;

    match mode {
        ReadoutMode::Exact => {
            report.checks.push(CheckRecord::eq(
                "direct-kd/max-deviation",
                kd.extrapolated.max_deviation(&exact),
                0.0,
                tol.direct_kd,
            ));
        }
        ReadoutMode::Sampled { .. } => {
            // Richardson weights on the two finest rungs
            let rr = ladder.factor.powi(BIAS_ORDER);
            let (wf, wc) = (rr / (rr - 1.0), 1.0 / (rr - 1.0));
            let n = kd.estimates.len();
            let (fine, coarse) = (&kd.estimates[n - 1], &kd.estimates[n - 2]);
            for ai in 0..d {
                for bi in 0..d {
                    let k = ai * d + bi;
                    let se = |e: &kdq_core::weakmeas::KdEstimate| {
                        e.readouts[k].map_or((0.0, 0.0), |r| {
                            let s = r.postselection_probability / r.coupling;
                            (r.standard_errors.0 * s, r.standard_errors.1 * s / cal.response)
                        })
                    };
                    let (fr, fi) = se(fine);
                    let (cr, ci) = se(coarse);
                    let se_re = (wf * wf * fr * fr + wc * wc * cr * cr).sqrt();
                    let se_im = (wf * wf * fi * fi + wc * wc * ci * ci).sqrt();
                    let got = kd.extrapolated.get(ai, bi);
                    let want = exact.get(ai, bi);
                    let name = format!("direct-kd/a{ai},b{bi}");
                    report.checks.push(CheckRecord::eq(
                        format!("{name}/re"),
                        got.re,
                        want.re,
                        Z_BOUND * se_re + tol.direct_kd,
                    ));
                    report.checks.push(CheckRecord::eq(
                        format!("{name}/im"),
                        got.im,
                        want.im,
                        Z_BOUND * se_im + tol.direct_kd,
                    ));
                }
            }
        }
    }
    report
        .distributions
        .push(DistributionRecord::from_distribution("kd/extrapolated", &kd.extrapolated));
    report.distributions.push(DistributionRecord::from_distribution("kd/exact", &exact));
    let seed = match mode {
        ReadoutMode::Sampled { seed, .. } => Some(seed),
        ReadoutMode::Exact => None,
    };
    for (rung, est) in kd.estimates.iter().enumerate() {
        for (k, r) in est.readouts.iter().enumerate() {
            if let Some(r) = r {
                let name = format!("g{rung}/a{},b{}", k / d, k % d);
                report.readouts.push(readout_record(name, r, spread, seed, &cal));
            }
        }
    }
    Ok(())
}

fn dynamics(cfg: &ScenarioConfig, ops: &OperandSet, report: &mut Report) -> Step<()> {
    let tol = cfg.tolerances;
    let hbar = cfg.constants.hbar;
    let d = cfg.dimension.unwrap_or_default();
    let dts = cfg.sweep.dt_ladder.clone().unwrap_or_default();
    for i in 0..cfg.sweep.instances.unwrap_or(0) {
        let r = &mut rng(cfg.seed, stream(d, i));
        let h = observable_or_random(ops, "H", d, r);
        let a = observable_or_random(ops, "A", d, r);
        let psi = state_or_random(ops, "psi", d, r);
        let name = format!("motion/{i}");
        let ladder = motion_identity_ladder(&a, &h, &psi, &dts, hbar).at(&name)?;
        // central-difference remainder: dt²/6 · sup|d³⟨A⟩/dt³| <= dt²·(4/3)‖H‖³‖A‖/ħ³
        let bound = 4.0 / 3.0 * h.largest_magnitude().powi(3) * a.largest_magnitude() / hbar.powi(3);
        for (dt, chk) in ladder.dts.iter().zip(&ladder.checks) {
            report.checks.push(CheckRecord::eq(
                format!("{name}/dt={dt:e}"),
                chk.lhs,
                chk.rhs,
                bound * dt * dt + tol.identity,
            ));
        }
        if ladder.residuals().iter().all(|&res| res > tol.identity) {
            report
                .checks
                .push(CheckRecord::eq(format!("{name}/slope"), ladder.slope, 2.0, tol.slope));
        }
    }

    let windows = cfg.sweep.windows.clone().unwrap_or_default();
    if !windows.is_empty() {
        let od = cfg.sweep.oscillator_dimension.unwrap_or(64);
        let sys = TruncatedOscillatorPair::new(od, cfg.constants.mass, 1.0, hbar).at("oscillator")?;
        let h = sys.free_hamiltonian().at("oscillator")?;
        let psi = sys.ground_state();
        for [t1, t2] in windows {
            let name = format!("two-time/[{t1},{t2}]");
            let c = two_time_imag_correlation(&sys, &h, &psi, t1, t2).at(&name)?;
            report.checks.push(CheckRecord::eq(
                name,
                c.measured,
                c.predicted,
                tol.two_time_relative * c.predicted.abs() + tol.two_time_absolute,
            ));
        }
    }
    Ok(())
}

fn propagator(cfg: &ScenarioConfig, report: &mut Report) -> Step<()> {
    let tol = cfg.tolerances;
    let d = cfg.dimension.unwrap_or_default();
    let c = &cfg.constants;
    let length = c.length.unwrap_or(d as f64);
    let width = cfg.sweep.kernel_width.unwrap_or(8.0);
    let sys = LatticeParticle::new(d, length, c.mass, c.hbar).at("lattice")?;
    for (i, p) in cfg.sweep.points.iter().flatten().enumerate() {
        let name = format!("propagator/{i}");
        let p0_index = sys.momentum_index(p.p0_wavenumber).at(&name)?;
        let f = free_propagator_conditional(&sys, p.x0_index, p0_index, p.t).at(&name)?;
        let cg = coarse_grain(&f, width).at(&name)?;
        let total: C64 = f.conditional.values().iter().sum();
        report.checks.push(CheckRecord::eq(
            format!("{name}/normalization"),
            (total - C64::new(1.0, 0.0)).norm(),
            0.0,
            tol.normalization,
        ));
        let classical = f.classical_position();
        report.checks.push(CheckRecord::new(
            format!("{name}/classical"),
            Relation::Le,
            modular_distance(cg.argmax_position(), classical, length),
            width,
            0.0,
        ));
        report.propagators.push(PropagatorRecord {
            name,
            dimension: d,
            length,
            mass: c.mass,
            hbar: c.hbar,
            t: p.t,
            x0: f.x0,
            p0: f.p0,
            values: f.conditional.values().iter().map(|&v| pair(v)).collect(),
            kernel_width: width,
            coarse_grained: cg.weights.clone(),
            classical_position: classical,
            argmax_position: cg.argmax_position(),
        });
    }
    Ok(())
}

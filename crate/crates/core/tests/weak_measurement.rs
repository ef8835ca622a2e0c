use kdq_core::hilbert::qubit;
use kdq_core::quasiprob::{kd_joint, weak_value};
use kdq_core::random::{random_basis, random_observable, random_state, rng};
use kdq_core::weakmeas::{
    calibrate_momentum_response, couple_and_postselect, direct_kd_extrapolated,
    direct_kd_measurement, extrapolate_weak_value, sample_readouts, CouplingLadder, PointerModel,
    Postselection, ReadoutMode,
};
use kdq_core::{OrthonormalBasis, C64};

const SPREAD: f64 = 1.0;

fn pointer() -> PointerModel {
    PointerModel::with_defaults(SPREAD, 0.05).unwrap()
}

#[test]
fn extrapolated_weak_values_match_algebra_for_random_instances() {
    let p = pointer();
    let ladder = CouplingLadder::for_spread(SPREAD);
    let cal = calibrate_momentum_response(&p, &ladder).unwrap();
    let mut r = rng(21, 0);
    let mut checked = 0;
    for d in [2, 3, 4] {
        for _ in 0..4 {
            let a = random_observable(d, &mut r);
            let psi = random_state(d, &mut r);
            let m = random_state(d, &mut r);
            let w = weak_value(&a, &psi, &m).unwrap().value;
            let lad = extrapolate_weak_value(&a, &psi, &m, &p, &ladder, &cal, Postselection::Strict);
            let lad = match lad {
                Ok(l) => l,
                // large weak values push the pointer off the grid at the top rung
                Err(kdq_core::QuantumError::GridTooCoarse { .. }) => continue,
                Err(e) => panic!("{e}"),
            };
            let tol = 1e-3 * (1.0 + w.norm()).powi(3);
            assert!((lad.extrapolated - w).norm() < tol, "d={d} {} vs {w}", lad.extrapolated);
            checked += 1;
        }
    }
    assert!(checked >= 8, "only {checked} instances fit the grid");
}

#[test]
fn sampled_readouts_scatter_like_their_standard_errors() {
    let p = PointerModel::with_defaults(SPREAD, 0.2).unwrap();
    let a = qubit::observable(&qubit::pauli_x());
    let psi = qubit::zero();
    let m = qubit::plus_i();
    let exact = couple_and_postselect(&a, &psi, &m, &p, Postselection::Strict).unwrap();
    let mut z2 = 0.0;
    let seeds = 40;
    for seed in 0..seeds {
        let s = sample_readouts(&a, &psi, &m, &p, Postselection::Strict, 4000, seed).unwrap();
        assert_eq!(s.sample_count, 4000);
        let zx = (s.mean_position_shift - exact.mean_position_shift) / s.standard_errors.0;
        let zp = (s.mean_momentum_shift - exact.mean_momentum_shift) / s.standard_errors.1;
        assert!(zx.abs() < 5.0 && zp.abs() < 5.0, "seed {seed}: {zx} {zp}");
        z2 += zx * zx + zp * zp;
    }
    let mean_z2 = z2 / (2 * seeds) as f64;
    assert!((0.5..2.0).contains(&mean_z2), "mean z² {mean_z2}");
}

#[test]
fn standard_error_falls_as_inverse_root_n() {
    let p = PointerModel::with_defaults(SPREAD, 0.2).unwrap();
    let a = qubit::observable(&qubit::pauli_x());
    let (psi, m) = (qubit::zero(), qubit::plus_i());
    let small = sample_readouts(&a, &psi, &m, &p, Postselection::Strict, 1000, 5).unwrap();
    let large = sample_readouts(&a, &psi, &m, &p, Postselection::Strict, 16000, 5).unwrap();
    for (s, l) in [
        (small.standard_errors.0, large.standard_errors.0),
        (small.standard_errors.1, large.standard_errors.1),
    ] {
        let ratio = s / l;
        assert!((ratio - 4.0).abs() < 0.8, "ratio {ratio}");
    }
}

#[test]
fn sampling_is_deterministic_per_seed() {
    let p = PointerModel::with_defaults(SPREAD, 0.2).unwrap();
    let a = qubit::observable(&qubit::pauli_x());
    let (psi, m) = (qubit::zero(), qubit::plus_i());
    let x = sample_readouts(&a, &psi, &m, &p, Postselection::Strict, 500, 9).unwrap();
    let y = sample_readouts(&a, &psi, &m, &p, Postselection::Strict, 500, 9).unwrap();
    let z = sample_readouts(&a, &psi, &m, &p, Postselection::Strict, 500, 10).unwrap();
    assert_eq!(x, y);
    assert_ne!(x, z);
}

#[test]
fn direct_kd_reproduces_the_distribution_in_three_dimensions() {
    let p = pointer();
    let ladder = CouplingLadder::for_spread(SPREAD);
    let cal = calibrate_momentum_response(&p, &ladder).unwrap();
    let mut r = rng(31, 0);
    let a = OrthonormalBasis::computational(3).unwrap();
    let b = random_basis(3, &mut r);
    let psi = random_state(3, &mut r);
    let exact = kd_joint(&a, &b, &psi).unwrap();
    let kd = direct_kd_extrapolated(&a, &b, &psi, &p, &ladder, &cal, ReadoutMode::Exact, Postselection::Strict)
        .unwrap();
    assert!(kd.extrapolated.max_deviation(&exact) < 1e-6);
    // marginal over a at each post-selection is its Born probability
    let born = b.born_probabilities(&psi).unwrap();
    for (got, want) in kd.extrapolated.marginal_b().iter().zip(born) {
        assert!((got - C64::new(want, 0.0)).norm() < 1e-6);
    }
}

#[test]
fn sampled_direct_kd_is_unbiased_within_errors() {
    let p = PointerModel::with_defaults(SPREAD, 0.2).unwrap();
    let cal = calibrate_momentum_response(&p, &CouplingLadder::for_spread(SPREAD)).unwrap();
    let a = qubit::z_basis();
    let b = qubit::x_basis();
    let psi = qubit::plus_i();
    let exact = direct_kd_measurement(&a, &b, &psi, &p, &cal, ReadoutMode::Exact, Postselection::Strict)
        .unwrap();
    let sampled = direct_kd_measurement(
        &a,
        &b,
        &psi,
        &p,
        &cal,
        ReadoutMode::Sampled { samples: 20000, seed: 3 },
        Postselection::Strict,
    )
    .unwrap();
    for (k, r) in sampled.readouts.iter().enumerate() {
        let r = r.unwrap();
        let (ai, bi) = (k / 2, k % 2);
        let scale = r.postselection_probability / r.coupling;
        let se_re = r.standard_errors.0 * scale;
        let se_im = r.standard_errors.1 * scale / cal.response;
        let diff = sampled.estimate.get(ai, bi) - exact.estimate.get(ai, bi);
        assert!(diff.re.abs() < 5.0 * se_re && diff.im.abs() < 5.0 * se_im, "{k}: {diff}");
    }
}

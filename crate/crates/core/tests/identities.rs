use kdq_core::quasiprob::{
    commutator_imag_identity, conditional_pre_post, kd_joint, kd_three_way, predict_born,
    reconstruct_operator, second_moment_identity, uncertainty_bound_check, universal_conditional,
    weak_value,
};
use kdq_core::random::{
    perturbed_mub_pair, random_basis, random_observable, random_state, rng,
};
use kdq_core::{
    evolve, evolve_heisenberg, expectation, hilbert::max_abs_diff, Observable, StateVector,
    UnitaryMap, C64,
};
use proptest::prelude::*;

fn dims() -> impl Strategy<Value = usize> {
    prop_oneof![Just(2usize), Just(3), Just(4), Just(6), Just(8)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn schrodinger_and_heisenberg_pictures_agree(d in 2usize..=8, seed: u64, t in -3.0f64..3.0) {
        let mut r = rng(seed, 0);
        let h = random_observable(d, &mut r);
        let a = random_observable(d, &mut r);
        let psi = random_state(d, &mut r);
        let u = UnitaryMap::evolution(&h, t, 1.0);
        let schrodinger = expectation(&a, &evolve(&u, &psi).unwrap()).unwrap();
        let at = evolve_heisenberg(&u, &a).unwrap();
        let heisenberg = expectation(&at, &psi).unwrap();
        prop_assert!((schrodinger - heisenberg).abs() < 1e-10);
        for (x, y) in at.eigenvalues().iter().zip(a.eigenvalues()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
        prop_assert!(at.reconstruction_error() < 1e-10);
    }

    #[test]
    fn spectral_decomposition_reconstructs(d in 2usize..=8, seed: u64) {
        let a = random_observable(d, &mut rng(seed, 1));
        prop_assert!(a.reconstruction_error() < 1e-10);
        prop_assert!(a.eigenbasis().orthonormality_deviation() < 1e-10);
        prop_assert!(a.eigenvalues().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn second_moment_decomposes_over_any_basis(d in dims(), seed: u64) {
        let mut r = rng(seed, 2);
        let a = random_observable(d, &mut r);
        let psi = random_state(d, &mut r);
        let m = random_basis(d, &mut r);
        let chk = second_moment_identity(&a, &psi, &m).unwrap();
        prop_assert!(chk.holds(1e-10), "{chk:?}");
    }

    #[test]
    fn weak_values_average_to_the_expectation(d in 2usize..=6, seed: u64) {
        let mut r = rng(seed, 3);
        let a = random_observable(d, &mut r);
        let psi = random_state(d, &mut r);
        let m = random_basis(d, &mut r);
        let mut avg = C64::new(0.0, 0.0);
        for mv in m.vectors() {
            let w = weak_value(&a, &psi, &mv).unwrap();
            prop_assert!(w.consistency_error().unwrap() < 1e-10);
            avg += w.value * w.overlap.norm_sqr();
        }
        prop_assert!((avg - C64::new(expectation(&a, &psi).unwrap(), 0.0)).norm() < 1e-10);
    }

    #[test]
    fn pre_post_conditional_sums_to_one(d in 2usize..=6, seed: u64) {
        let mut r = rng(seed, 4);
        let b = random_basis(d, &mut r);
        let psi = random_state(d, &mut r);
        let m = random_state(d, &mut r);
        let p = conditional_pre_post(&b, &psi, &m).unwrap();
        prop_assert!(p.normalization_error() < 1e-10);
    }

    #[test]
    fn commutator_and_uncertainty(d in 2usize..=3, seed: u64) {
        let mut r = rng(seed, 5);
        let a = random_observable(d, &mut r);
        let b = random_observable(d, &mut r);
        let psi = random_state(d, &mut r);
        let chk = commutator_imag_identity(&a, &b, &psi).unwrap();
        prop_assert!(chk.holds(1e-10), "{chk:?}");
        let unc = uncertainty_bound_check(&a, &b, &psi).unwrap();
        prop_assert!(unc.satisfied(1e-10), "{unc:?}");
        prop_assert!((unc.bound - chk.lhs.abs()).abs() < 1e-10);
    }

    #[test]
    fn kd_marginals_are_born_probabilities(d in 2usize..=6, seed: u64) {
        let mut r = rng(seed, 6);
        let a = random_basis(d, &mut r);
        let b = random_basis(d, &mut r);
        let psi = random_state(d, &mut r);
        let rho = kd_joint(&a, &b, &psi).unwrap();
        for (got, want) in rho.marginal_a().iter().zip(a.born_probabilities(&psi).unwrap()) {
            prop_assert!((got - C64::new(want, 0.0)).norm() < 1e-10);
        }
        for (got, want) in rho.marginal_b().iter().zip(b.born_probabilities(&psi).unwrap()) {
            prop_assert!((got - C64::new(want, 0.0)).norm() < 1e-10);
        }
        let s = rho.summary();
        prop_assert!(s.nonclassicality >= -1e-12);
    }

    #[test]
    fn three_orderings_agree(d in 2usize..=5, seed: u64) {
        let mut r = rng(seed, 7);
        let t = kd_three_way(&random_basis(d, &mut r), &random_basis(d, &mut r), &random_basis(d, &mut r)).unwrap();
        prop_assert!(t.cyclic_deviation() < 1e-12);
    }

    #[test]
    fn born_prediction_and_reconstruction(d in 2usize..=6, seed: u64) {
        let mut r = rng(seed, 8);
        let (a, b) = perturbed_mub_pair(d, 0.3, &mut r);
        let m_obs = random_observable(d, &mut r);
        let psi = random_state(d, &mut r);
        let p = universal_conditional(m_obs.eigenbasis(), &a, &b).unwrap();
        let rho = kd_joint(&a, &b, &psi).unwrap();
        let predicted = predict_born(&p, &rho).unwrap();
        let born = m_obs.eigenbasis().born_probabilities(&psi).unwrap();
        for (x, y) in predicted.iter().zip(&born) {
            prop_assert!((x - y).abs() < 1e-10);
        }
        let rebuilt = reconstruct_operator(m_obs.eigenvalues(), &p, &a, &b).unwrap();
        prop_assert!(max_abs_diff(&rebuilt, m_obs.matrix()) < 1e-10);
        for cond in 0..d * d {
            let (ai, bi) = (cond / d, cond % d);
            let total: C64 = p.distribution(&[ai, bi]).iter().sum();
            prop_assert!((total - C64::new(1.0, 0.0)).norm() < 1e-10);
        }
    }
}

#[test]
fn state_renormalization_is_idempotent() {
    let mut r = rng(11, 0);
    for d in 2..=8 {
        let psi = random_state(d, &mut r);
        let again = StateVector::from_vector(psi.amplitudes().clone()).unwrap();
        assert_eq!(psi, again);
    }
}

#[test]
fn observables_from_spectrum_round_trip() {
    let mut r = rng(12, 0);
    let a = random_observable(5, &mut r);
    let b = Observable::from_spectrum(
        a.eigenvalues().to_vec(),
        a.eigenbasis().clone(),
        kdq_core::Degeneracy::Forbid,
    )
    .unwrap();
    assert!(max_abs_diff(a.matrix(), b.matrix()) < 1e-12);
}

//! Invariants over randomized PT-symmetric lattices.

mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ptbic::propagation::{self, Method};
use ptbic::scattering;
use ptbic::spectrum;
use ptbic::{check_pt_symmetry, fmt_num, Complex64, LatticeModel};

fn lattice_from_seed(seed: u64, half_width: usize) -> LatticeModel {
    common::random_pt_lattice(&mut ChaCha8Rng::seed_from_u64(seed), half_width)
}

/// Site reversal combined with complex conjugation.
fn pt_conjugate(c: &[Complex64]) -> Vec<Complex64> {
    c.iter().rev().map(|z| z.conj()).collect()
}

fn max_dist(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

fn assert_conjugate_pairs(energies: &[Complex64], tol: f64) {
    for e in energies {
        let partner = energies
            .iter()
            .map(|f| (f - e.conj()).norm())
            .fold(f64::INFINITY, f64::min);
        assert!(partner < tol, "{e} has no conjugate partner ({partner:e})");
    }
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 48,
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn generated_lattices_are_pt_symmetric(seed in any::<u64>(), n in 2usize..30) {
        prop_assert!(check_pt_symmetry(&lattice_from_seed(seed, n), 0.0).pass);
    }

    #[test]
    fn json_round_trip_is_exact(seed in any::<u64>(), n in 2usize..30) {
        let model = lattice_from_seed(seed, n);
        let back = LatticeModel::from_json(&model.to_json().unwrap()).unwrap();
        prop_assert_eq!(back.couplings(), model.couplings());
        prop_assert_eq!(back.potentials(), model.potentials());
        prop_assert_eq!(back.half_width(), model.half_width());
    }

    #[test]
    fn formatted_numbers_parse_back(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
        let parsed: f64 = fmt_num(x).parse().unwrap();
        prop_assert!(parsed == x || (parsed == 0.0 && x == 0.0));
    }

    #[test]
    fn spectrum_is_closed_under_conjugation(seed in any::<u64>(), n in 5usize..30) {
        let h = lattice_from_seed(seed, n).hamiltonian();
        let energies = spectrum::eigenvalues(&h).unwrap();
        assert_conjugate_pairs(&energies, 1e-8 * h.norm_inf());
    }

    #[test]
    fn eigenvalue_sum_equals_trace(seed in any::<u64>(), n in 5usize..30) {
        let model = lattice_from_seed(seed, n);
        let sum: Complex64 = spectrum::eigenvalues(&model.hamiltonian()).unwrap().iter().sum();
        let trace: Complex64 = model.potentials().iter().sum();
        prop_assert!((sum - trace).norm() < 1e-10 * (1.0 + trace.norm()) * n as f64);
    }

    #[test]
    fn model_a_spectrum_pairs(delta in -1.0f64..1.0, g in 0.0f64..2.0, n in 10usize..40) {
        let h = LatticeModel::model_a(delta, g, n).unwrap().hamiltonian();
        assert_conjugate_pairs(&spectrum::eigenvalues(&h).unwrap(), 1e-8);
    }

    #[test]
    fn hermitian_scattering_is_unitary(delta in -1.5f64..1.5, q in 0.01f64..3.13) {
        let model = LatticeModel::model_a(delta, 0.0, 10).unwrap();
        let s = scattering::solve_scattering(&model, q, None).unwrap();
        prop_assert!((s.t.norm_sqr() + s.r.norm_sqr() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn hermitian_part_conserves_power(seed in any::<u64>(), n in 5usize..20, site in -4i64..=4) {
        let model = lattice_from_seed(seed, n).hermitian_part();
        let c0 = propagation::site_excitation(n, site).unwrap();
        let trace = propagation::propagate(&model, &c0, 10.0, 2.5, Method::AdaptiveRk).unwrap();
        for p in &trace.power {
            prop_assert!((p - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn propagation_is_linear(seed in any::<u64>(), re in -2.0f64..2.0, im in -2.0f64..2.0) {
        let n = 12;
        let model = lattice_from_seed(seed, n);
        let alpha = Complex64::new(re, im);
        let a = propagation::site_excitation(n, 0).unwrap();
        let b = propagation::site_excitation(n, 5).unwrap();
        let mix: Vec<Complex64> = a.iter().zip(&b).map(|(x, y)| x + alpha * y).collect();
        let end = |c: &[Complex64]| {
            propagation::propagate(&model, c, 5.0, 5.0, Method::MatrixExponential).unwrap().last_state().to_vec()
        };
        let (ya, yb, ym) = (end(&a), end(&b), end(&mix));
        let expected: Vec<Complex64> = ya.iter().zip(&yb).map(|(x, y)| x + alpha * y).collect();
        let scale = propagation::power(&expected).sqrt().max(1.0);
        prop_assert!(max_dist(&ym, &expected) < 1e-11 * scale);
    }

    #[test]
    fn pt_conjugate_evolution_runs_backwards(seed in any::<u64>(), site in -3i64..=3) {
        // if c(z) solves the equation, so does PT c(z_f - z)
        let (n, z_f) = (10, 3.0);
        let model = lattice_from_seed(seed, n);
        let c0 = propagation::site_excitation(n, site).unwrap();
        let forward = propagation::propagate(&model, &c0, z_f, z_f, Method::MatrixExponential).unwrap();
        let back = propagation::propagate(&model, &pt_conjugate(forward.last_state()), z_f, z_f, Method::MatrixExponential)
            .unwrap();
        let scale = propagation::power(forward.last_state()).sqrt().max(1.0);
        prop_assert!(max_dist(back.last_state(), &pt_conjugate(&c0)) < 1e-9 * scale);
    }
}

#[test]
fn fixed_seed_suite_is_green() {
    for model in common::random_pt_lattices(20, 7) {
        let h = model.hamiltonian();
        let pairs = spectrum::eigendecompose(&h).unwrap();
        for p in &pairs {
            assert!(
                p.residual <= spectrum::RESIDUAL_REL_TOL * h.norm_inf().max(1.0),
                "{}",
                p.residual
            );
        }
        let energies: Vec<Complex64> = pairs.iter().map(|p| p.energy).collect();
        assert_conjugate_pairs(&energies, 1e-8 * h.norm_inf());
    }
}

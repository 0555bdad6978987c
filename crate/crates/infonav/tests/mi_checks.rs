//! The variational mutual-information bound, certified by exact
//! enumeration on tabular dynamics.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use infonav::evalkit::{mi_bound, mi_exact, mi_sweep, Classifier, TabularDynamics};

#[test]
fn injective_dynamics_reach_log2_of_action_count() {
    let d = TabularDynamics::injective(4);
    let exact = mi_exact(&d).unwrap();
    assert!((exact - (7.0f64).log2()).abs() < 1e-9, "exact {exact}");
    // Bayes classifier closes the gap for deterministic injective dynamics.
    let bound = mi_bound(&d, &Classifier::bayes(&d)).unwrap();
    assert!((exact - bound).abs() < 1e-9);
}

#[test]
fn constant_dynamics_carry_zero_information() {
    let d = TabularDynamics::constant(5);
    let exact = mi_exact(&d).unwrap();
    assert!(exact.abs() < 1e-12);
    let bound = mi_bound(&d, &Classifier::bayes(&d)).unwrap();
    assert!(bound <= exact + 1e-9);
}

#[test]
fn bound_never_exceeds_exact_mi_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for i in 0..30 {
        let d = TabularDynamics::random(2 + i % 4, 2 + i % 7, &mut rng);
        d.validate().unwrap();
        let exact = mi_exact(&d).unwrap();
        for classifier in [Classifier::bayes(&d), Classifier::uniform(&d)] {
            classifier.validate(&d).unwrap();
            let bound = mi_bound(&d, &classifier).unwrap();
            assert!(
                bound <= exact + 1e-9,
                "instance {i}: bound {bound} > exact {exact}"
            );
        }
    }
}

#[test]
fn bayes_classifier_attains_the_exact_value() {
    // The bound with the Bayes posterior equals I exactly (the variational
    // family contains the optimum).
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let d = TabularDynamics::random(3, 5, &mut rng);
        let exact = mi_exact(&d).unwrap();
        let bound = mi_bound(&d, &Classifier::bayes(&d)).unwrap();
        assert!((exact - bound).abs() < 1e-9, "{exact} vs {bound}");
    }
}

#[test]
fn uniform_classifier_gives_zero_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let d = TabularDynamics::random(3, 4, &mut rng);
    // log2 q = -log2 C everywhere, so the bound collapses to zero.
    let bound = mi_bound(&d, &Classifier::uniform(&d)).unwrap();
    assert!(bound.abs() < 1e-9);
}

#[test]
fn sweep_covers_canonical_and_random_cases() {
    let rows = mi_sweep(20, 123).unwrap();
    assert!(rows.len() >= 22);
    for row in &rows {
        assert!(
            row.bound_bits <= row.exact_bits + 1e-9,
            "{}: {} > {}",
            row.instance,
            row.bound_bits,
            row.exact_bits
        );
        assert!(row.exact_bits >= -1e-12);
    }
    let injective = rows.iter().find(|r| r.instance == "injective").unwrap();
    assert!((injective.exact_bits - (7.0f64).log2()).abs() < 1e-9);
    assert!(injective.gap_bits.abs() < 1e-9);
    let constant = rows.iter().find(|r| r.instance == "constant").unwrap();
    assert!(constant.exact_bits.abs() < 1e-12);
}

#[test]
fn sweep_is_deterministic_per_seed() {
    let a = mi_sweep(5, 42).unwrap();
    let b = mi_sweep(5, 42).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.instance, y.instance);
        assert_eq!(x.exact_bits, y.exact_bits);
        assert_eq!(x.bound_bits, y.bound_bits);
    }
}

#[test]
fn malformed_dynamics_are_rejected() {
    let mut d = TabularDynamics::constant(2);
    d.probs[0][0][0] = 0.5; // row no longer sums to one
    assert!(d.validate().is_err());
    assert!(mi_exact(&d).is_err());
}

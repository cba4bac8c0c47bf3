use cdpa::aggregator::{fedavg, ldp_aggregate};
use cdpa::analysis::{cosine_similarity, monte_carlo_recovery_error, MonteCarloSpec, RecoveryRule};
use cdpa::model::GradientSet;
use cdpa::rng::{keyed_rng, Stream};
use rand::Rng;

fn within_3_sigma(empirical: f64, expected: f64, n: usize) -> bool {
    let sigma = (expected * (1.0 - expected) / n as f64).sqrt();
    if sigma == 0.0 {
        empirical == expected
    } else {
        (empirical - expected).abs() <= 3.0 * sigma
    }
}

#[test]
fn scaled_recovery_matches_closed_form_at_default_p() {
    for r in [5, 20, 100] {
        let spec = MonteCarloSpec {
            rule: RecoveryRule::Scaled,
            ..MonteCarloSpec::new(r, 0.98, vec![2], 100_000, 17)
        };
        let rep = monte_carlo_recovery_error(&spec).unwrap();
        for (polarity, rate) in [("one", rep.empirical_p_gamma2), ("zero", rep.empirical_p_gamma2_zero)] {
            assert!(
                within_3_sigma(rate, rep.p_gamma2, rep.observations),
                "R={r}, {polarity} bits: {rate} vs {}",
                rep.p_gamma2
            );
        }
    }
}

#[test]
fn scaled_rule_splits_by_polarity_at_low_p() {
    // R = 5, p = 0.6: the scaled threshold 1.5 needs two ones
    let spec = MonteCarloSpec {
        rule: RecoveryRule::Scaled,
        ..MonteCarloSpec::new(5, 0.6, vec![3], 100_000, 4)
    };
    let rep = monte_carlo_recovery_error(&spec).unwrap();
    let ones = 1.0 - 0.4f64.powi(5) - 5.0 * 0.6 * 0.4f64.powi(4);
    let zeros = 0.6f64.powi(5) + 5.0 * 0.4 * 0.6f64.powi(4);
    assert!(within_3_sigma(rep.empirical_p_gamma2, ones, rep.observations));
    assert!(within_3_sigma(rep.empirical_p_gamma2_zero, zeros, rep.observations));
    assert!((rep.p_gamma2 - 0.68256).abs() < 1e-12);
}

#[test]
fn ldp_keeps_the_fedavg_direction() {
    let mut rng = keyed_rng(8, Stream::Data, &[]);
    let sets: Vec<GradientSet> = (0..10)
        .map(|_| GradientSet::new(vec![("w".into(), (0..1000).map(|_| rng.random_range(-1.0..1.0)).collect())]))
        .collect();
    let plain = fedavg(&sets).unwrap();
    let noisy = ldp_aggregate(&sets, 4.0, 1.0, &mut keyed_rng(8, Stream::Laplace, &[])).unwrap();
    let a: Vec<f64> = plain.values().collect();
    let b: Vec<f64> = noisy.values().collect();
    assert!(cosine_similarity(&a, &b) > 0.0);
}

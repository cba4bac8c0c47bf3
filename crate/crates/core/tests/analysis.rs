use cdpa::analysis::{
    expected_flip_error, monte_carlo_recovery_error, recovery_curve, recovery_success_prob, MonteCarloSpec,
};
use cdpa::codec::FlipMask;

#[test]
fn monte_carlo_matches_closed_form_across_grid() {
    let template = MonteCarloSpec::new(1, 1.0, vec![3], 20_000, 99);
    let rs = [3, 7, 10, 25, 60, 100];
    let ps = [0.6, 0.7, 0.8, 0.9, 0.99];
    for rep in recovery_curve(&rs, &ps, &template).unwrap() {
        let q = rep.p_gamma2;
        let sigma = (q * (1.0 - q) / rep.observations as f64).sqrt();
        let diff = (rep.empirical_p_gamma2 - q).abs();
        assert!(diff <= 3.0 * sigma || (sigma == 0.0 && diff == 0.0), "R={}, p={}: {diff}", rep.clients, rep.p);
    }
}

#[test]
fn r20_p09_single_bit() {
    let rep = monte_carlo_recovery_error(&MonteCarloSpec::new(20, 0.9, vec![2], 100_000, 5)).unwrap();
    let fail = 1.0 - recovery_success_prob(20, 0.9).unwrap();
    let sigma = (fail * (1.0 - fail) / 100_000.0).sqrt();
    assert!(((1.0 - rep.empirical_p_gamma2) - fail).abs() <= 3.0 * sigma.max(1.0 / 100_000.0));
    assert!((rep.empirical_p_gamma2 - rep.p_gamma2).abs() <= rep.p_gamma2_ci);
}

#[test]
fn single_bit_formula_tracks_simulation() {
    for pos in [2u8, 3, 5] {
        let mask = FlipMask::new(vec![pos], 0.9, 4, 16).unwrap();
        for r in [5, 9, 20] {
            for p in [0.8, 0.85, 0.9, 0.95] {
                let expected = expected_flip_error(r, p, &mask).unwrap();
                let fail = 1.0 - recovery_success_prob(r, p).unwrap();
                let trials = 50_000;
                // need enough failures to estimate a mean
                if fail * (trials as f64) < 30.0 {
                    continue;
                }
                let rep = monte_carlo_recovery_error(&MonteCarloSpec::new(r, p, vec![pos], trials, u64::from(pos))).unwrap();
                let ratio = rep.empirical_error / expected;
                assert!((0.5..=2.0).contains(&ratio), "pos {pos}, R={r}, p={p}: ratio {ratio}");
            }
        }
    }
}

#[test]
fn error_curve_falls_with_p() {
    let template = MonteCarloSpec::new(1, 1.0, vec![2, 3], 5_000, 1);
    let ps = [0.5, 0.6, 0.7, 0.8, 0.9, 1.0];
    let reps = recovery_curve(&[20], &ps, &template).unwrap();
    for w in reps.windows(2) {
        assert!(w[1].empirical_error <= w[0].empirical_error, "{} -> {}", w[0].p, w[1].p);
    }
    assert_eq!(reps.last().unwrap().empirical_error, 0.0);
}

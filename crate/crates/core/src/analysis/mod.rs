//! Recovery-error formulas and their Monte Carlo check, communication and
//! carbon accounting, and a closed-form gradient inversion probe.

mod cost;
mod probe;
mod recovery;

pub use cost::{carbon_estimate, comm_cost, CostReport};
pub use probe::{
    cosine_similarity, inversion_probe, reconstruct_input, run_probe, write_probe_csv, ProbePipeline,
    ProbeResult,
};
pub use recovery::{
    expected_flip_error, monte_carlo_recovery_error, recovery_curve, recovery_failure_prob,
    recovery_success_prob, write_recovery_curve_file,
    write_recovery_curve_csv, MonteCarloSpec, RecoveryErrorReport, RecoveryRule,
};

/// Formats a real with 9 significant digits, dropping trailing zeros.
pub fn format_sig9(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let rounded: f64 = format!("{x:.8e}").parse().expect("formatted float parses");
    rounded.to_string()
}

#[cfg(test)]
mod tests {
    use super::format_sig9;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(format_sig9(0.0), "0");
        assert_eq!(format_sig9(1.0 / 3.0), "0.333333333");
        assert_eq!(format_sig9(123456789012.0), "123456789000");
        assert_eq!(format_sig9(-2.5), "-2.5");
        assert_eq!(format_sig9(f64::NAN), "NaN");
    }
}

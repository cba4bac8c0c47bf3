//! Closed-form recovery probability against Monte Carlo over a small grid.

use cdpa::analysis::{recovery_curve, write_recovery_curve_csv, MonteCarloSpec};

fn main() -> cdpa::Result<()> {
    let template = MonteCarloSpec::new(1, 0.5, vec![2], 20_000, 2024);
    let reports = recovery_curve(&[5, 20, 100], &[0.6, 0.8, 0.95], &template)?;
    write_recovery_curve_csv(&reports, std::io::stdout().lock())
}

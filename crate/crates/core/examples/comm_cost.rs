//! Wire size of one encoded client payload against 32-bit floats.

use cdpa::analysis::{carbon_estimate, comm_cost};
use cdpa::codec::{float_to_fixed, unpack_payload, pack_payload, PayloadLayer};

fn main() -> cdpa::Result<()> {
    for (params, m) in [(1_000, 16), (9_000, 16), (9_000, 8), (100_000, 12)] {
        let (words, _) = float_to_fixed(&vec![0.01; params], 4, m)?;
        let layer = PayloadLayer::new(0, m, 4, vec![2, 3], &words)?;
        let payload = unpack_payload(&pack_payload(0, 0, &[layer])?)?;
        let r = comm_cost(&payload, 32)?;
        println!(
            "{params:>7} params, m={m:<2}: {:>8} bits vs {:>8}, reduction {:.4}",
            r.bits_per_client_per_round, r.baseline_bits, r.reduction_fraction
        );
    }
    println!("10 s at 0.3 kg/h: {:.6} kg CO2", carbon_estimate(10_000.0, 0.3));
    Ok(())
}

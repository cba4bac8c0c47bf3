use serde::{Deserialize, Serialize};

use crate::codec::Payload;
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    /// Serialized payload size, header included.
    pub bits_per_client_per_round: u64,
    /// `n` bits for every transmitted parameter.
    pub baseline_bits: u64,
    /// `1 - bits / baseline_bits`.
    pub reduction_fraction: f64,
    pub wall_ms_per_round: f64,
    pub kg_co2: f64,
}

/// Measures `payload` by serializing it and compares against `n` bits per
/// parameter. Timing fields are left at zero for the caller to fill.
pub fn comm_cost(payload: &Payload, baseline_bits_per_param: u32) -> Result<CostReport> {
    let bits = payload.to_bytes()?.len() as u64 * 8;
    let params: u64 = payload.layers.iter().map(|l| l.param_count() as u64).sum();
    let baseline_bits = params * u64::from(baseline_bits_per_param);
    let reduction_fraction = if baseline_bits == 0 {
        f64::NEG_INFINITY
    } else {
        1.0 - bits as f64 / baseline_bits as f64
    };
    Ok(CostReport {
        bits_per_client_per_round: bits,
        baseline_bits,
        reduction_fraction,
        wall_ms_per_round: 0.0,
        kg_co2: 0.0,
    })
}

/// `(wall_ms / 3.6e6) * kg_per_hour`.
pub fn carbon_estimate(wall_ms: f64, kg_per_hour: f64) -> f64 {
    wall_ms / 3_600_000.0 * kg_per_hour
}

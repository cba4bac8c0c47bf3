use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Per-bit, per-round local privacy budget of randomized response with
/// retain probability `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub p: f64,
}

impl PrivacyBudget {
    pub fn from_p(p: f64) -> Result<Self> {
        Ok(Self {
            epsilon: epsilon_of(p)?,
            p,
        })
    }

    pub fn from_epsilon(epsilon: f64) -> Result<Self> {
        Ok(Self {
            epsilon,
            p: p_of_epsilon(epsilon)?,
        })
    }
}

/// `ln(p / (1 - p))` for `p` in `(0.5, 1]`; `p = 1` gives `+inf`.
pub fn epsilon_of(p: f64) -> Result<f64> {
    if !(p > 0.5 && p <= 1.0) {
        return Err(Error::Domain(format!("epsilon_of needs 0.5 < p <= 1, got {p}")));
    }
    if p == 1.0 {
        return Ok(f64::INFINITY);
    }
    // 1 - p is exact for p in [0.5, 1]
    Ok(p.ln() - (1.0 - p).ln())
}

/// Inverse of [`epsilon_of`]: `e^eps / (1 + e^eps)`.
pub fn p_of_epsilon(epsilon: f64) -> Result<f64> {
    if epsilon.is_nan() || epsilon < 0.0 {
        return Err(Error::Domain(format!("epsilon must be >= 0, got {epsilon}")));
    }
    // Form 1 - q for large epsilon so the small flip probability q keeps
    // its precision until the final subtraction.
    Ok(if epsilon > 1.0 {
        1.0 - 1.0 / (1.0 + epsilon.exp())
    } else {
        1.0 / (1.0 + (-epsilon).exp())
    })
}

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::format_sig9;
use crate::aggregator::{recover_bit, LayerAggregation, LayerSpec, RoundState, DEFAULT_THRESHOLD};
use crate::codec::{flip_bits, scale_factor, toggle_magnitude, FixedWord, FlipMask, Payload, PayloadLayer};
use crate::rng::{derive_seed, keyed_rng, Stream};
use crate::{Error, Result};

fn check_args(clients: usize, p: f64) -> Result<()> {
    if clients == 0 {
        return Err(Error::Domain("client count must be >= 1".into()));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("retain probability must be in [0, 1], got {p}")));
    }
    Ok(())
}

/// Binomial(R, p) mass summed over `range`, each term evaluated in log-space.
fn binomial_mass(clients: usize, p: f64, range: std::ops::Range<usize>) -> f64 {
    if p == 1.0 {
        return if range.contains(&clients) { 1.0 } else { 0.0 };
    }
    if p == 0.0 {
        return if range.contains(&0) { 1.0 } else { 0.0 };
    }
    let (lp, lq) = (p.ln(), (1.0 - p).ln());
    let mut log_choose = 0.0;
    let mut total = 0.0;
    for i in 0..=clients {
        if i > 0 {
            log_choose += ((clients - i + 1) as f64).ln() - (i as f64).ln();
        }
        if range.contains(&i) {
            total += (log_choose + i as f64 * lp + (clients - i) as f64 * lq).exp();
        }
    }
    total.min(1.0)
}

/// Probability that at least `ceil(R/2)` of `R` independent copies of a bit
/// survive flipping with retain probability `p`.
///
/// Any `p` in `[0, 1]` is accepted so curves can start at `p = 0.5`.
pub fn recovery_success_prob(clients: usize, p: f64) -> Result<f64> {
    check_args(clients, p)?;
    Ok(binomial_mass(clients, p, clients.div_ceil(2)..clients + 1))
}

/// `1 - recovery_success_prob`, summed directly so small values keep their
/// relative precision.
pub fn recovery_failure_prob(clients: usize, p: f64) -> Result<f64> {
    check_args(clients, p)?;
    Ok(binomial_mass(clients, p, 0..clients.div_ceil(2)))
}

/// Expected magnitude of the recovery error for one word: each masked
/// position `i` contributes `2^(m-1-i) / 10^z` times the failure probability.
///
/// Uses the mask's positions and `m`, `z`; `p` is passed separately so one
/// mask can be evaluated along a sweep. Summing over positions assumes their
/// failures are independent and never cancel, so this is an approximation.
pub fn expected_flip_error(clients: usize, p: f64, mask: &FlipMask) -> Result<f64> {
    let failure = recovery_failure_prob(clients, p)?;
    Ok(mask
        .positions()
        .iter()
        .map(|&i| toggle_magnitude(i, mask.m(), mask.z()) * failure)
        .sum())
}

/// How the Monte Carlo decides a masked bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecoveryRule {
    /// `count / R >= threshold`.
    Majority,
    /// `count / (R p) >= threshold`, as the aggregator applies it.
    Scaled,
}

impl std::str::FromStr for RecoveryRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "majority" => Ok(Self::Majority),
            "scaled" => Ok(Self::Scaled),
            other => Err(Error::Config(format!("unknown recovery rule {other:?}"))),
        }
    }
}

impl std::fmt::Display for RecoveryRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Majority => "majority",
            Self::Scaled => "scaled",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSpec {
    pub clients: usize,
    pub p: f64,
    /// Masked positions, 0-based from the MSB.
    pub positions: Vec<u8>,
    pub m: u8,
    pub z: u8,
    /// Integer value of the word every client holds.
    pub value: i64,
    pub trials: usize,
    pub seed: u64,
    pub rule: RecoveryRule,
    pub threshold: f64,
}

impl MonteCarloSpec {
    /// The 16-bit word for 2.7813 at `z = 4`, recovered by majority.
    pub fn new(clients: usize, p: f64, positions: Vec<u8>, trials: usize, seed: u64) -> Self {
        Self {
            clients,
            p,
            positions,
            m: 16,
            z: 4,
            value: 27813,
            trials,
            seed,
            rule: RecoveryRule::Majority,
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryErrorReport {
    #[serde(rename = "R")]
    pub clients: usize,
    pub p: f64,
    pub rule: RecoveryRule,
    /// Closed-form success probability.
    pub p_gamma2: f64,
    /// Closed-form mean error of one word.
    pub expected_error: f64,
    /// Mean `|decoded - original|` over trials.
    pub empirical_error: f64,
    pub trials: usize,
    /// Three standard errors of `empirical_error`.
    pub ci_halfwidth: f64,
    /// Three binomial standard deviations of a success rate around the
    /// closed form, with the variance floored at one expected event so the
    /// band never shrinks below a single count.
    pub p_gamma2_ci: f64,
    /// Success rate on masked bits whose true value is one.
    pub empirical_p_gamma2: f64,
    /// Success rate on masked bits whose true value is zero.
    pub empirical_p_gamma2_zero: f64,
    /// Masked-bit observations behind each polarity's rate.
    pub observations: usize,
}

/// Sends `R` copies of a word and of its masked complement through flipping,
/// bitwise accumulation and recovery, `trials` times.
///
/// The complement gives every masked position one observation of each
/// polarity per trial, which matters because a tie recovers to one.
pub fn monte_carlo_recovery_error(spec: &MonteCarloSpec) -> Result<RecoveryErrorReport> {
    check_args(spec.clients, spec.p)?;
    if spec.trials < 1000 {
        return Err(Error::Domain(format!("need at least 1000 trials, got {}", spec.trials)));
    }
    let mask = FlipMask::new(spec.positions.clone(), 1.0, spec.z, spec.m)?;
    let word = FixedWord::from_value(spec.value, spec.m)?;
    let complement = FixedWord::from_raw(word.raw() ^ mask.word_bits(), spec.m)?;
    let words = [word, complement];

    let m = spec.m as usize;
    let r = spec.clients;
    let layout = vec![LayerSpec {
        layer_id: 0,
        name: "probe".into(),
        param_count: 2,
        m: spec.m,
        z: spec.z,
        mask: mask.positions().to_vec(),
        aggregation: LayerAggregation::Bitwise,
    }];
    let mut state = RoundState::new(layout, r)?.with_round(0);
    let mut payload = Payload {
        round: 0,
        client_id: 0,
        layers: vec![PayloadLayer::new(0, spec.m, spec.z, mask.positions().to_vec(), &words)?],
    };
    let masked: Vec<bool> = (0..spec.m).map(|i| mask.contains(i)).collect();
    let rule_p = match spec.rule {
        RecoveryRule::Majority => 1.0,
        RecoveryRule::Scaled => spec.p,
    };
    let scale = scale_factor(spec.z);
    let mut rng = keyed_rng(spec.seed, Stream::MonteCarlo, &[r as u64, spec.p.to_bits()]);

    let (mut ones_ok, mut zeros_ok) = (0usize, 0usize);
    let (mut err_sum, mut err_sq) = (0.0, 0.0);
    for _ in 0..spec.trials {
        state.reset();
        for client in 0..r {
            payload.client_id = client as u32;
            for (slot, &w) in payload.layers[0].words.iter_mut().zip(&words) {
                *slot = flip_bits(w, mask.positions(), spec.p, &mut rng).raw();
            }
            state.accumulate(&payload)?;
        }
        let counts = state.counters(0);
        for (k, &truth) in words.iter().enumerate() {
            let raw = counts[k * m..(k + 1) * m]
                .iter()
                .zip(&masked)
                .fold(0u32, |acc, (&c, &is_masked)| {
                    (acc << 1) | u32::from(recover_bit(c, r, rule_p, is_masked, spec.threshold))
                });
            let got = FixedWord::from_raw(raw, spec.m)?;
            for &i in mask.positions() {
                let ok = got.bit(i) == truth.bit(i);
                if truth.bit(i) {
                    ones_ok += usize::from(ok);
                } else {
                    zeros_ok += usize::from(ok);
                }
            }
            if k == 0 {
                let e = (f64::from(got.value()) - f64::from(truth.value())).abs() / scale;
                err_sum += e;
                err_sq += e * e;
            }
        }
    }

    let n = spec.trials as f64;
    let observations = spec.trials * mask.positions().len();
    let rate = |ok: usize| if observations == 0 { 1.0 } else { ok as f64 / observations as f64 };
    let mean = err_sum / n;
    let p_gamma2 = recovery_success_prob(r, spec.p)?;
    let p_gamma2_ci = if observations == 0 {
        0.0
    } else {
        let obs = observations as f64;
        3.0 * ((p_gamma2 * (1.0 - p_gamma2)).max(1.0 / obs) / obs).sqrt()
    };
    let var = (err_sq / n - mean * mean).max(0.0) * n / (n - 1.0);
    Ok(RecoveryErrorReport {
        clients: r,
        p: spec.p,
        rule: spec.rule,
        p_gamma2,
        expected_error: expected_flip_error(r, spec.p, &mask)?,
        empirical_error: mean,
        trials: spec.trials,
        ci_halfwidth: 3.0 * (var / n).sqrt(),
        p_gamma2_ci,
        empirical_p_gamma2: rate(ones_ok),
        empirical_p_gamma2_zero: rate(zeros_ok),
        observations,
    })
}

/// Runs `template` at every `(R, p)` cell, in parallel. Each cell draws from
/// its own stream derived from the template seed.
pub fn recovery_curve(clients: &[usize], ps: &[f64], template: &MonteCarloSpec) -> Result<Vec<RecoveryErrorReport>> {
    let cells: Vec<(usize, f64)> = clients
        .iter()
        .flat_map(|&r| ps.iter().map(move |&p| (r, p)))
        .collect();
    cells
        .par_iter()
        .map(|&(r, p)| {
            let spec = MonteCarloSpec {
                clients: r,
                p,
                seed: derive_seed(template.seed, Stream::MonteCarlo, &[r as u64, p.to_bits()]),
                ..template.clone()
            };
            monte_carlo_recovery_error(&spec)
        })
        .collect()
}

/// Writes `recovery_curve.csv`-style rows. The empirical `p_gamma2` column is
/// the one-polarity rate and `ci` is [`RecoveryErrorReport::p_gamma2_ci`].
/// The error's own half-width, the zero-polarity rate and the rule trail the row.
pub fn write_recovery_curve_csv<W: std::io::Write>(reports: &[RecoveryErrorReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Encode(format!("csv: {e}"));
    w.write_record([
        "R",
        "p",
        "p_gamma2_closed",
        "p_gamma2_empirical",
        "expected_error",
        "empirical_error",
        "ci",
        "error_ci",
        "p_gamma2_empirical_zero",
        "rule",
    ])
    .map_err(io)?;
    for r in reports {
        w.write_record([
            r.clients.to_string(),
            format_sig9(r.p),
            format_sig9(r.p_gamma2),
            format_sig9(r.empirical_p_gamma2),
            format_sig9(r.expected_error),
            format_sig9(r.empirical_error),
            format_sig9(r.p_gamma2_ci),
            format_sig9(r.ci_halfwidth),
            format_sig9(r.empirical_p_gamma2_zero),
            r.rule.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::Encode(format!("csv: {e}")))?;
    Ok(())
}

/// [`write_recovery_curve_csv`] into a file.
pub fn write_recovery_curve_file(reports: &[RecoveryErrorReport], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_recovery_curve_csv(reports, file)
}

//! FedAvg and the comparison aggregators: Laplace LDP, signSGD, GradDrop.

use rand::Rng;

use crate::model::GradientSet;
use crate::{Error, Result};

fn check_sets(sets: &[GradientSet]) -> Result<&GradientSet> {
    let first = sets
        .first()
        .ok_or_else(|| Error::Shape("no gradient sets to aggregate".into()))?;
    for s in &sets[1..] {
        first.check_layout(s)?;
    }
    Ok(first)
}

/// Coordinatewise arithmetic mean.
pub fn fedavg(sets: &[GradientSet]) -> Result<GradientSet> {
    let first = check_sets(sets)?;
    let mut out = GradientSet::zeros(&first.layout());
    for s in sets {
        for (o, v) in out.values_mut().zip(s.values()) {
            *o += v;
        }
    }
    let n = sets.len() as f64;
    out.values_mut().for_each(|v| *v /= n);
    Ok(out)
}

/// One draw from a zero-mean Laplace distribution with the given scale.
pub fn sample_laplace<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> f64 {
    if scale == 0.0 {
        return 0.0;
    }
    // u in (-1/2, 1/2); inverse CDF
    let u: f64 = rng.random::<f64>() - 0.5;
    let tail = 1.0 - 2.0 * u.abs();
    if tail <= 0.0 {
        return 0.0;
    }
    -scale * u.signum() * tail.ln()
}

fn check_ldp(epsilon: f64, clip: f64) -> Result<()> {
    if !(epsilon > 0.0) {
        return Err(Error::Domain(format!("ldp epsilon must be > 0, got {epsilon}")));
    }
    if !(clip > 0.0 && clip.is_finite()) {
        return Err(Error::Domain(format!("ldp clip must be > 0, got {clip}")));
    }
    Ok(())
}

/// Client-side LDP: clip every coordinate to `[-clip, clip]` and add Laplace
/// noise of scale `2 clip / epsilon`. `epsilon = inf` adds no noise.
pub fn ldp_perturb<R: Rng + ?Sized>(
    g: &GradientSet,
    epsilon: f64,
    clip: f64,
    rng: &mut R,
) -> Result<GradientSet> {
    check_ldp(epsilon, clip)?;
    let scale = 2.0 * clip / epsilon;
    let mut out = g.map(|v| v.clamp(-clip, clip));
    for v in out.values_mut() {
        *v += sample_laplace(scale, rng);
    }
    Ok(out)
}

/// [`ldp_perturb`] on every client (drawing from `rng` in client order),
/// then [`fedavg`].
pub fn ldp_aggregate<R: Rng + ?Sized>(
    sets: &[GradientSet],
    epsilon: f64,
    clip: f64,
    rng: &mut R,
) -> Result<GradientSet> {
    check_ldp(epsilon, clip)?;
    check_sets(sets)?;
    let noisy = sets
        .iter()
        .map(|g| ldp_perturb(g, epsilon, clip, rng))
        .collect::<Result<Vec<_>>>()?;
    fedavg(&noisy)
}

/// Majority vote over per-client signs, emitted as `+1` / `-1`. Zero
/// gradients and tied votes count as `+1`.
pub fn signsgd_aggregate(sets: &[GradientSet]) -> Result<GradientSet> {
    let first = check_sets(sets)?;
    let mut votes = vec![0i64; first.total_len()];
    for s in sets {
        for (v, g) in votes.iter_mut().zip(s.values()) {
            *v += if g >= 0.0 { 1 } else { -1 };
        }
    }
    let mut out = GradientSet::zeros(&first.layout());
    for (o, v) in out.values_mut().zip(votes) {
        *o = if v >= 0 { 1.0 } else { -1.0 };
    }
    Ok(out)
}

/// Zeroes the `n - ceil((1 - f) n)` smallest-magnitude coordinates across the
/// whole set. Among equal magnitudes the earlier coordinate is dropped first.
pub fn graddrop_filter(g: &GradientSet, drop_fraction: f64) -> Result<GradientSet> {
    if !(0.0..1.0).contains(&drop_fraction) {
        return Err(Error::Domain(format!(
            "drop_fraction must be in [0, 1), got {drop_fraction}"
        )));
    }
    let n = g.total_len();
    let keep = ((1.0 - drop_fraction) * n as f64).ceil() as usize;
    let drop = n - keep.min(n);
    let values: Vec<f64> = g.values().collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].abs().total_cmp(&values[b].abs()).then(a.cmp(&b)));
    let mut dropped = vec![false; n];
    for &i in &order[..drop] {
        dropped[i] = true;
    }
    let mut out = g.clone();
    for (v, d) in out.values_mut().zip(dropped) {
        if d {
            *v = 0.0;
        }
    }
    Ok(out)
}

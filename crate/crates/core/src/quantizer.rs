//! Lattice quantization on the scaled integer lattice `delta * Z^L`, with
//! plain, dithered and subtractive-dithered variants.
//!
//! Vectors longer than the lattice dimension are cut into consecutive
//! sub-vectors of length `L`; the final sub-vector is zero-padded and the
//! padding is dropped from the output.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::{keyed_rng, Stream};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    /// Sub-vector length `L`.
    pub dim: usize,
    /// Generator scale; the generator matrix is `delta * I`.
    pub delta: f64,
    /// Optional bound on the Euclidean norm of emitted lattice points.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
}

impl LatticeSpec {
    pub fn new(dim: usize, delta: f64) -> Result<Self> {
        Self {
            dim,
            delta,
            radius: None,
        }
        .validated()
    }

    /// Grid step `k * 10^-z`, so lattice points are exact at `z` decimals.
    pub fn decimal(dim: usize, k: u32, z: u8) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config("lattice step multiplier k must be >= 1".into()));
        }
        Self::new(dim, k as f64 * 10f64.powi(-(z as i32)))
    }

    pub fn with_radius(mut self, radius: f64) -> Result<Self> {
        self.radius = Some(radius);
        self.validated()
    }

    pub fn validated(self) -> Result<Self> {
        if self.dim == 0 {
            return Err(Error::Config("lattice dim must be >= 1".into()));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::Config(format!("lattice delta must be positive, got {}", self.delta)));
        }
        if let Some(r) = self.radius {
            if !(r > 0.0) {
                return Err(Error::Config(format!("lattice radius must be positive, got {r}")));
            }
        }
        Ok(self)
    }

    /// Covering radius of the scaled integer lattice, `(delta / 2) * sqrt(L)`.
    pub fn covering_radius(&self) -> f64 {
        self.delta / 2.0 * (self.dim as f64).sqrt()
    }
}

/// Componentwise nearest point of `delta * Z^L`; halves round away from zero.
///
/// When the spec carries a radius and the nearest point lies outside it, the
/// input is first shrunk onto the sphere and truncated toward zero, which
/// keeps the result inside the ball.
pub fn nearest_lattice_point(x: &[f64], spec: &LatticeSpec) -> Vec<f64> {
    let mut q: Vec<f64> = x.iter().map(|v| spec.delta * (v / spec.delta).round()).collect();
    if let Some(r) = spec.radius {
        let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > r {
            let xnorm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let s = if xnorm > 0.0 { r / xnorm } else { 0.0 };
            q = x
                .iter()
                .map(|v| spec.delta * (v * s / spec.delta).trunc())
                .collect();
        }
    }
    q
}

#[derive(Debug, Clone, PartialEq)]
pub struct DitherDraw {
    pub seed: u64,
    pub values: Vec<f64>,
}

/// `length` values uniform on `[-delta/2, delta/2)`, reproducible from `seed`.
pub fn sample_dither(seed: u64, length: usize, spec: &LatticeSpec) -> DitherDraw {
    let mut rng = keyed_rng(seed, Stream::Dither, &[]);
    let half = spec.delta / 2.0;
    let values = (0..length).map(|_| rng.random_range(-half..half)).collect();
    DitherDraw { seed, values }
}

fn padded_len(n: usize, dim: usize) -> usize {
    n.div_ceil(dim) * dim
}

/// Plain lattice quantization of every sub-vector.
pub fn lattice_quantize(v: &[f64], spec: &LatticeSpec) -> Vec<f64> {
    quantize_blocks(v, spec, |x| nearest_lattice_point(x, spec))
}

fn quantize_blocks(v: &[f64], spec: &LatticeSpec, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(padded_len(v.len(), spec.dim));
    let mut block = vec![0.0; spec.dim];
    for chunk in v.chunks(spec.dim) {
        block[..chunk.len()].copy_from_slice(chunk);
        block[chunk.len()..].iter_mut().for_each(|b| *b = 0.0);
        out.extend(f(&block));
    }
    out.truncate(v.len());
    out
}

/// Dithered quantization `Q(x + d)` with an explicit dither, which must cover
/// the padded length.
pub fn dq_quantize_with(v: &[f64], spec: &LatticeSpec, dither: &[f64]) -> Result<Vec<f64>> {
    check_dither(v, spec, dither)?;
    let mut offset = 0;
    Ok(quantize_blocks(v, spec, |x| {
        let d = &dither[offset..offset + spec.dim];
        offset += spec.dim;
        let shifted: Vec<f64> = x.iter().zip(d).map(|(a, b)| a + b).collect();
        nearest_lattice_point(&shifted, spec)
    }))
}

/// Subtractive dithered quantization `Q(x + d) - d` with an explicit dither.
pub fn sdq_quantize_with(v: &[f64], spec: &LatticeSpec, dither: &[f64]) -> Result<Vec<f64>> {
    let mut q = dq_quantize_with(v, spec, dither)?;
    for (qi, di) in q.iter_mut().zip(dither) {
        *qi -= di;
    }
    Ok(q)
}

/// Dithered quantization with the dither drawn from `seed`.
pub fn dq_quantize(v: &[f64], spec: &LatticeSpec, seed: u64) -> Vec<f64> {
    let dither = sample_dither(seed, padded_len(v.len(), spec.dim), spec);
    dq_quantize_with(v, spec, &dither.values).expect("dither sized to padded length")
}

/// Subtractive dithered quantization with the dither drawn from `seed`.
///
/// Output length equals input length; each sub-vector's error is bounded by
/// the covering radius and, over dither draws, uniform on the basic cell.
pub fn sdq_quantize(v: &[f64], spec: &LatticeSpec, seed: u64) -> Vec<f64> {
    let dither = sample_dither(seed, padded_len(v.len(), spec.dim), spec);
    sdq_quantize_with(v, spec, &dither.values).expect("dither sized to padded length")
}

fn check_dither(v: &[f64], spec: &LatticeSpec, dither: &[f64]) -> Result<()> {
    let need = padded_len(v.len(), spec.dim);
    if dither.len() < need {
        return Err(Error::Shape(format!(
            "dither has {} values, padded input needs {need}",
            dither.len()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(dim: usize, delta: f64) -> LatticeSpec {
        LatticeSpec::new(dim, delta).unwrap()
    }

    /// Exhaustive nearest-point search over lattice points within `2 * delta`.
    fn brute_nearest(x: f64, delta: f64) -> f64 {
        let base = (x / delta).floor() as i64;
        (base - 2..=base + 2)
            .map(|k| k as f64 * delta)
            .min_by(|a, b| (a - x).abs().partial_cmp(&(b - x).abs()).unwrap())
            .unwrap()
    }

    #[test]
    fn lattice_points_are_fixed() {
        assert_eq!(nearest_lattice_point(&[1.0, -2.0], &spec(2, 0.5)), vec![1.0, -2.0]);
    }

    #[test]
    fn nearest_matches_brute_force() {
        assert_eq!(brute_nearest(0.37, 0.5), 0.5);
        assert_eq!(nearest_lattice_point(&[0.37], &spec(1, 0.5)), vec![0.5]);
        for i in -200..200 {
            let x = i as f64 * 0.0137 + 0.001;
            let q = nearest_lattice_point(&[x], &spec(1, 0.5))[0];
            assert_eq!(q, brute_nearest(x, 0.5), "x = {x}");
        }
    }

    #[test]
    fn ties_round_away_from_zero() {
        assert_eq!(nearest_lattice_point(&[0.25], &spec(1, 0.5)), vec![0.5]);
        assert_eq!(nearest_lattice_point(&[-0.25], &spec(1, 0.5)), vec![-0.5]);
    }

    #[test]
    fn radius_bounds_the_output() {
        let s = spec(2, 0.5).with_radius(1.0).unwrap();
        let q = nearest_lattice_point(&[3.0, 4.0], &s);
        assert!(q.iter().map(|v| v * v).sum::<f64>().sqrt() <= 1.0);
        assert_eq!(nearest_lattice_point(&[0.4, 0.1], &s), vec![0.5, 0.0]);
    }

    #[test]
    fn dither_is_deterministic_and_in_cell() {
        let s = spec(1, 0.5);
        let a = sample_dither(3, 1000, &s);
        assert_eq!(a, sample_dither(3, 1000, &s));
        assert_ne!(a.values, sample_dither(4, 1000, &s).values);
        assert!(a.values.iter().all(|v| (-0.25..0.25).contains(v)));
    }

    #[test]
    fn dither_mean_is_centred() {
        let d = sample_dither(99, 100_000, &spec(1, 0.5));
        let mean = d.values.iter().sum::<f64>() / d.values.len() as f64;
        // sd of the mean = 0.5 / sqrt(12 * 1e5) ~ 4.6e-4
        assert!(mean.abs() < 0.005, "mean {mean}");
    }

    #[test]
    fn sdq_single_value_direct_evaluation() {
        let s = spec(1, 0.5);
        let q = sdq_quantize_with(&[0.3], &s, &[0.2]).unwrap();
        assert!((q[0] - 0.3).abs() < 1e-15);
        let dq = dq_quantize_with(&[0.3], &s, &[0.2]).unwrap();
        assert_eq!(dq, vec![0.5]);
    }

    #[test]
    fn sdq_with_zero_dither_fixes_lattice_points() {
        let s = spec(3, 0.25);
        let v = vec![0.25, -1.5, 2.0, 0.0, 0.75];
        assert_eq!(sdq_quantize_with(&v, &s, &[0.0; 6]).unwrap(), v);
    }

    #[test]
    fn sdq_preserves_length_and_rejects_short_dither() {
        let s = spec(4, 0.1);
        let v: Vec<f64> = (0..10).map(|i| i as f64 * 0.033).collect();
        assert_eq!(sdq_quantize(&v, &s, 1).len(), 10);
        assert!(sdq_quantize_with(&v, &s, &[0.0; 10]).is_err());
    }

    #[test]
    fn decimal_spec_and_validation() {
        let s = LatticeSpec::decimal(2, 1, 4).unwrap();
        assert!((s.delta - 1e-4).abs() < 1e-18);
        assert!((spec(4, 0.5).covering_radius() - 0.5).abs() < 1e-15);
        assert!(LatticeSpec::new(0, 1.0).is_err());
        assert!(LatticeSpec::new(1, 0.0).is_err());
        assert!(LatticeSpec::decimal(1, 0, 4).is_err());
    }
}

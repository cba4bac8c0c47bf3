//! The client half of one CDPA layer: quantize, convert to fixed point, flip.

use rand::Rng;

use crate::codec::{flip_words, float_to_fixed, FixedWord, FlipMask};
use crate::quantizer::{sdq_quantize, LatticeSpec};
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedLayer {
    /// Words after quantization and fixed-point conversion, before flipping.
    pub clean: Vec<FixedWord>,
    /// Words as transmitted.
    pub sent: Vec<FixedWord>,
    /// Values that saturated during fixed-point conversion.
    pub clamped: usize,
}

/// Runs `values` through SDQ (when a lattice is given), fixed-point
/// conversion with `mask.z()` / `mask.m()`, and the mask's bit flipping.
pub fn encode_layer<R: Rng + ?Sized>(
    values: &[f64],
    lattice: Option<&LatticeSpec>,
    dither_seed: u64,
    mask: &FlipMask,
    flip_rng: &mut R,
) -> Result<EncodedLayer> {
    let quantized;
    let input = match lattice {
        Some(spec) => {
            quantized = sdq_quantize(values, spec, dither_seed);
            &quantized[..]
        }
        None => values,
    };
    let (clean, clamped) = float_to_fixed(input, mask.z(), mask.m())?;
    let sent = if mask.is_empty() {
        clean.clone()
    } else {
        flip_words(&clean, mask, flip_rng)?
    };
    Ok(EncodedLayer { clean, sent, clamped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::fixed_to_float;
    use crate::rng::{keyed_rng, Stream};

    #[test]
    fn disabled_pipeline_only_rounds() {
        let mask = FlipMask::empty(4, 32).unwrap();
        let v = vec![0.123456, -3.05071, 0.0];
        let enc = encode_layer(&v, None, 0, &mask, &mut keyed_rng(0, Stream::Flip, &[])).unwrap();
        assert_eq!(enc.clean, enc.sent);
        for (a, b) in fixed_to_float(&enc.sent, 4).iter().zip(&v) {
            assert!((a - b).abs() <= 0.5e-4 + 1e-15);
        }
    }

    #[test]
    fn flips_touch_only_masked_bits() {
        let mask = FlipMask::new(vec![2, 3], 0.6, 4, 16).unwrap();
        let v: Vec<f64> = (0..500).map(|i| (i as f64 - 250.0) * 0.01).collect();
        let spec = LatticeSpec::decimal(4, 1, 4).unwrap();
        let enc = encode_layer(&v, Some(&spec), 9, &mask, &mut keyed_rng(1, Stream::Flip, &[])).unwrap();
        let bits = mask.word_bits();
        assert!(enc.clean.iter().zip(&enc.sent).all(|(c, s)| (c.raw() ^ s.raw()) & !bits == 0));
        assert!(enc.clean.iter().zip(&enc.sent).any(|(c, s)| c != s));
    }
}

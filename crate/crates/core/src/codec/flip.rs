use rand::Rng;
use serde::{Deserialize, Serialize};

use super::fixed::{check_width, scale_factor, FixedWord};
use crate::{Error, Result};

/// Bit positions eligible for randomized flipping, with the retain
/// probability `p` and the fixed-point parameters they apply to.
///
/// Positions are 0-based from the most significant bit, sorted and distinct.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FlipMaskRepr", into = "FlipMaskRepr")]
pub struct FlipMask {
    positions: Vec<u8>,
    p: f64,
    z: u8,
    m: u8,
}

#[derive(Serialize, Deserialize)]
struct FlipMaskRepr {
    positions: Vec<u8>,
    p: f64,
    z: u8,
    m: u8,
}

impl TryFrom<FlipMaskRepr> for FlipMask {
    type Error = Error;
    fn try_from(r: FlipMaskRepr) -> Result<Self> {
        FlipMask::new(r.positions, r.p, r.z, r.m)
    }
}

impl From<FlipMask> for FlipMaskRepr {
    fn from(m: FlipMask) -> Self {
        Self {
            positions: m.positions,
            p: m.p,
            z: m.z,
            m: m.m,
        }
    }
}

impl FlipMask {
    pub fn new(mut positions: Vec<u8>, p: f64, z: u8, m: u8) -> Result<Self> {
        check_width(m)?;
        if !(p > 0.5 && p <= 1.0) {
            return Err(Error::Domain(format!("retain probability must be in (0.5, 1], got {p}")));
        }
        positions.sort_unstable();
        let n = positions.len();
        positions.dedup();
        if positions.len() != n {
            return Err(Error::Domain("mask positions must be distinct".into()));
        }
        if let Some(&bad) = positions.iter().find(|&&i| i >= m) {
            return Err(Error::Domain(format!("mask position {bad} outside word width {m}")));
        }
        Ok(Self { positions, p, z, m })
    }

    /// No flipped positions; `p = 1`.
    pub fn empty(z: u8, m: u8) -> Result<Self> {
        Self::new(Vec::new(), 1.0, z, m)
    }

    pub fn positions(&self) -> &[u8] {
        &self.positions
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn z(&self) -> u8 {
        self.z
    }

    pub fn m(&self) -> u8 {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn contains(&self, position: u8) -> bool {
        self.positions.binary_search(&position).is_ok()
    }

    /// Masked positions as a right-aligned bit set of the word.
    pub fn word_bits(&self) -> u32 {
        positions_to_word_bits(&self.positions, self.m)
    }
}

pub(crate) fn positions_to_word_bits(positions: &[u8], m: u8) -> u32 {
    positions.iter().fold(0u32, |acc, &i| acc | (1 << (m - 1 - i)))
}

/// Real-valued change caused by toggling `position` of an `m`-bit word
/// decoded with `10^z`: `2^(m-1-position) / 10^z`.
pub fn toggle_magnitude(position: u8, m: u8, z: u8) -> f64 {
    2f64.powi((m - 1 - position) as i32) / scale_factor(z)
}

/// Flips each of `positions` independently with probability `1 - p`.
///
/// One uniform draw is consumed per position, in position order, whether or
/// not the bit flips. `p` may be any probability here; [`FlipMask`] is where
/// the `p > 0.5` privacy constraint lives.
pub fn flip_bits<R: Rng + ?Sized>(word: FixedWord, positions: &[u8], p: f64, rng: &mut R) -> FixedWord {
    let flip_prob = 1.0 - p;
    let m = word.width();
    let mut toggles = 0u32;
    for &i in positions {
        if rng.random::<f64>() < flip_prob {
            toggles |= 1 << (m - 1 - i);
        }
    }
    word.xor_raw(toggles)
}

/// Applies the randomized response of `mask` to one word.
pub fn bit_flip<R: Rng + ?Sized>(word: FixedWord, mask: &FlipMask, rng: &mut R) -> Result<FixedWord> {
    if word.width() != mask.m {
        return Err(Error::Domain(format!(
            "word width {} does not match mask width {}",
            word.width(),
            mask.m
        )));
    }
    Ok(flip_bits(word, &mask.positions, mask.p, rng))
}

/// [`bit_flip`] over a slice, drawing from `rng` in word order.
pub fn flip_words<R: Rng + ?Sized>(words: &[FixedWord], mask: &FlipMask, rng: &mut R) -> Result<Vec<FixedWord>> {
    words.iter().map(|&w| bit_flip(w, mask, rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{keyed_rng, Stream};

    fn word(v: i64) -> FixedWord {
        FixedWord::from_value(v, 16).unwrap()
    }

    #[test]
    fn retain_one_is_identity() {
        let mask = FlipMask::new(vec![0, 2, 3, 15], 1.0, 4, 16).unwrap();
        let mut rng = keyed_rng(1, Stream::Flip, &[]);
        for v in [-32768, -1, 0, 1, 27813, 32767] {
            assert_eq!(bit_flip(word(v), &mask, &mut rng).unwrap(), word(v));
        }
    }

    #[test]
    fn empty_mask_is_identity() {
        let mask = FlipMask::new(vec![], 0.6, 4, 16).unwrap();
        let mut rng = keyed_rng(1, Stream::Flip, &[]);
        assert_eq!(bit_flip(word(27813), &mask, &mut rng).unwrap(), word(27813));
    }

    #[test]
    fn validation() {
        assert!(FlipMask::new(vec![2, 3], 0.5, 4, 16).is_err());
        assert!(FlipMask::new(vec![2, 3], 1.01, 4, 16).is_err());
        assert!(FlipMask::new(vec![2, 2], 0.9, 4, 16).is_err());
        assert!(FlipMask::new(vec![16], 0.9, 4, 16).is_err());
        let m = FlipMask::new(vec![3, 2], 0.98, 4, 16).unwrap();
        assert_eq!(m.positions(), &[2, 3]);
        assert_eq!(m.word_bits(), 0b0011_0000_0000_0000);
        let mut rng = keyed_rng(1, Stream::Flip, &[]);
        let narrow = FixedWord::from_value(3, 8).unwrap();
        assert!(bit_flip(narrow, &m, &mut rng).is_err());
    }

    #[test]
    fn toggle_magnitudes() {
        assert!((toggle_magnitude(2, 16, 4) - 0.8192).abs() < 1e-15);
        assert!((toggle_magnitude(3, 16, 4) - 0.4096).abs() < 1e-15);
        assert!((toggle_magnitude(15, 16, 4) - 1e-4).abs() < 1e-18);
    }

    #[test]
    fn serde_rejects_invalid_masks() {
        let ok: FlipMask = serde_json::from_str(r#"{"positions":[3,2],"p":0.98,"z":4,"m":16}"#).unwrap();
        assert_eq!(ok.positions(), &[2, 3]);
        assert!(serde_json::from_str::<FlipMask>(r#"{"positions":[2],"p":0.4,"z":4,"m":16}"#).is_err());
    }
}

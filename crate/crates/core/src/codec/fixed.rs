use std::fmt;

use crate::{Error, Result};

pub const MIN_WIDTH: u8 = 8;
pub const MAX_WIDTH: u8 = 32;

pub(crate) fn check_width(m: u8) -> Result<()> {
    if (MIN_WIDTH..=MAX_WIDTH).contains(&m) {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "word width {m} outside [{MIN_WIDTH}, {MAX_WIDTH}]"
        )))
    }
}

pub(crate) fn width_mask(m: u8) -> u32 {
    if m >= 32 {
        u32::MAX
    } else {
        (1u32 << m) - 1
    }
}

/// `10^z`.
pub fn scale_factor(z: u8) -> f64 {
    10f64.powi(z as i32)
}

/// An `m`-bit two's-complement integer. Bit positions are counted from the
/// most significant bit, starting at 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FixedWord {
    raw: u32,
    width: u8,
}

impl FixedWord {
    /// Encodes a signed value, failing if it is not representable in `width` bits.
    pub fn from_value(value: i64, width: u8) -> Result<Self> {
        check_width(width)?;
        let (lo, hi) = Self::range(width);
        if value < lo || value > hi {
            return Err(Error::Domain(format!(
                "{value} not representable in {width} bits"
            )));
        }
        Ok(Self {
            raw: (value as u32) & width_mask(width),
            width,
        })
    }

    /// Wraps raw bits; bits above `width` must be clear.
    pub fn from_raw(raw: u32, width: u8) -> Result<Self> {
        check_width(width)?;
        if raw & !width_mask(width) != 0 {
            return Err(Error::Domain(format!("raw {raw:#x} exceeds {width} bits")));
        }
        Ok(Self { raw, width })
    }

    /// Inclusive `(min, max)` of `width`-bit two's complement.
    pub fn range(width: u8) -> (i64, i64) {
        let half = 1i64 << (width - 1);
        (-half, half - 1)
    }

    pub fn raw(self) -> u32 {
        self.raw
    }

    pub fn width(self) -> u8 {
        self.width
    }

    /// Sign-extended value.
    pub fn value(self) -> i32 {
        let shift = 32 - self.width as u32;
        ((self.raw << shift) as i32) >> shift
    }

    /// Bit at `position` counted from the MSB.
    pub fn bit(self, position: u8) -> bool {
        debug_assert!(position < self.width);
        (self.raw >> (self.width - 1 - position)) & 1 == 1
    }

    /// The word with the bit at `position` (from the MSB) inverted.
    pub fn toggled(self, position: u8) -> Self {
        debug_assert!(position < self.width);
        Self {
            raw: self.raw ^ (1 << (self.width - 1 - position)),
            width: self.width,
        }
    }

    pub(crate) fn xor_raw(self, bits: u32) -> Self {
        Self {
            raw: self.raw ^ (bits & width_mask(self.width)),
            width: self.width,
        }
    }
}

/// Binary digits MSB first, grouped in nibbles: `0110 1100 1010 0101`.
impl fmt::Display for FixedWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.width {
            if i > 0 && i % 4 == 0 {
                f.write_str(" ")?;
            }
            f.write_str(if self.bit(i) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Rounds every value to `z` decimals (half away from zero), scales by
/// `10^z` and stores it as an `m`-bit word. Out-of-range values saturate;
/// the second element counts how many did.
pub fn float_to_fixed(v: &[f64], z: u8, m: u8) -> Result<(Vec<FixedWord>, usize)> {
    check_width(m)?;
    let scale = scale_factor(z);
    let (lo, hi) = FixedWord::range(m);
    let mut clamped = 0;
    let mut words = Vec::with_capacity(v.len());
    for (index, &x) in v.iter().enumerate() {
        if !x.is_finite() {
            return Err(Error::NonFinite { index });
        }
        let scaled = (x * scale).round();
        let value = if scaled < lo as f64 {
            clamped += 1;
            lo
        } else if scaled > hi as f64 {
            clamped += 1;
            hi
        } else {
            scaled as i64
        };
        words.push(FixedWord {
            raw: (value as u32) & width_mask(m),
            width: m,
        });
    }
    Ok((words, clamped))
}

/// Signed value of each word divided by `10^z`.
pub fn fixed_to_float(words: &[FixedWord], z: u8) -> Vec<f64> {
    let scale = scale_factor(z);
    words.iter().map(|w| w.value() as f64 / scale).collect()
}

//! Wire format of one client's round message.
//!
//! ```text
//! header   "CDPA" | version u8 (=1) | round u32 LE | client_id u32 LE | layer_count u16 LE
//! layer    layer_id u16 LE | param_count u32 LE | m u8 | z u8
//!          | mask bitmap, ceil(m/8) bytes, bit i (MSB-first) = mask position i
//!          | words: param_count * m bits, each word MSB-first, zero-padded to a byte
//! ```

use super::fixed::{check_width, width_mask, FixedWord};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CDPA";
pub const VERSION: u8 = 1;
const HEADER_LEN: usize = 4 + 1 + 4 + 4 + 2;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PayloadLayer {
    pub layer_id: u16,
    pub m: u8,
    pub z: u8,
    /// Flip-mask positions, sorted, 0-based from the MSB.
    pub mask: Vec<u8>,
    /// Raw `m`-bit two's-complement words.
    pub words: Vec<u32>,
}

impl PayloadLayer {
    pub fn new(layer_id: u16, m: u8, z: u8, mask: Vec<u8>, words: &[FixedWord]) -> Result<Self> {
        check_width(m)?;
        if let Some(w) = words.iter().find(|w| w.width() != m) {
            return Err(Error::Encode(format!(
                "layer {layer_id}: word of width {} in a {m}-bit layer",
                w.width()
            )));
        }
        let layer = Self {
            layer_id,
            m,
            z,
            mask,
            words: words.iter().map(|w| w.raw()).collect(),
        };
        layer.validate()?;
        Ok(layer)
    }

    pub fn param_count(&self) -> usize {
        self.words.len()
    }

    pub fn fixed_words(&self) -> impl Iterator<Item = FixedWord> + '_ {
        self.words
            .iter()
            .map(move |&w| FixedWord::from_raw(w, self.m).expect("validated layer"))
    }

    fn body_len(&self) -> usize {
        (self.words.len() * self.m as usize).div_ceil(8)
    }

    fn validate(&self) -> Result<()> {
        check_width(self.m).map_err(|e| Error::Encode(e.to_string()))?;
        if self.words.len() > u32::MAX as usize {
            return Err(Error::Encode(format!(
                "layer {}: {} parameters overflow the 32-bit count",
                self.layer_id,
                self.words.len()
            )));
        }
        if !self.mask.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Encode(format!(
                "layer {}: mask positions must be sorted and distinct",
                self.layer_id
            )));
        }
        if let Some(&p) = self.mask.iter().find(|&&p| p >= self.m) {
            return Err(Error::Encode(format!(
                "layer {}: mask position {p} outside width {}",
                self.layer_id, self.m
            )));
        }
        let over = !width_mask(self.m);
        if let Some(i) = self.words.iter().position(|w| w & over != 0) {
            return Err(Error::Encode(format!(
                "layer {}: word {i} exceeds {} bits",
                self.layer_id, self.m
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Payload {
    pub round: u32,
    pub client_id: u32,
    pub layers: Vec<PayloadLayer>,
}

impl Payload {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        pack_payload(self.round, self.client_id, &self.layers)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        unpack_payload(bytes)
    }

    /// Exact serialized length in bytes.
    pub fn encoded_len(&self) -> usize {
        HEADER_LEN
            + self
                .layers
                .iter()
                .map(|l| 8 + (l.m as usize).div_ceil(8) + l.body_len())
                .sum::<usize>()
    }
}

struct BitWriter<'a> {
    out: &'a mut Vec<u8>,
    acc: u64,
    nbits: u32,
}

impl<'a> BitWriter<'a> {
    fn new(out: &'a mut Vec<u8>) -> Self {
        Self { out, acc: 0, nbits: 0 }
    }

    fn push(&mut self, value: u32, width: u32) {
        self.acc = (self.acc << width) | u64::from(value);
        self.nbits += width;
        while self.nbits >= 8 {
            self.nbits -= 8;
            self.out.push((self.acc >> self.nbits) as u8);
        }
        self.acc &= (1u64 << self.nbits) - 1;
    }

    fn finish(self) {
        if self.nbits > 0 {
            self.out.push((self.acc << (8 - self.nbits)) as u8);
        }
    }
}

/// Serializes one round message. Fails if the layout cannot be expressed in
/// the fixed-width header fields or a word does not fit its layer width.
pub fn pack_payload(round: u32, client_id: u32, layers: &[PayloadLayer]) -> Result<Vec<u8>> {
    if layers.len() > u16::MAX as usize {
        return Err(Error::Encode(format!("{} layers overflow the 16-bit count", layers.len())));
    }
    for layer in layers {
        layer.validate()?;
    }
    let mut out = Vec::with_capacity(
        HEADER_LEN
            + layers
                .iter()
                .map(|l| 8 + (l.m as usize).div_ceil(8) + l.body_len())
                .sum::<usize>(),
    );
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&round.to_le_bytes());
    out.extend_from_slice(&client_id.to_le_bytes());
    out.extend_from_slice(&(layers.len() as u16).to_le_bytes());
    for layer in layers {
        out.extend_from_slice(&layer.layer_id.to_le_bytes());
        out.extend_from_slice(&(layer.words.len() as u32).to_le_bytes());
        out.push(layer.m);
        out.push(layer.z);
        let mut bitmap = vec![0u8; (layer.m as usize).div_ceil(8)];
        for &p in &layer.mask {
            bitmap[p as usize / 8] |= 0x80 >> (p % 8);
        }
        out.extend_from_slice(&bitmap);
        let mut writer = BitWriter::new(&mut out);
        for &w in &layer.words {
            writer.push(w, layer.m as u32);
        }
        writer.finish();
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let available = self.bytes.len() - self.pos;
        if available < n {
            return Err(Error::Parse {
                offset: self.pos,
                reason: format!("truncated {what}: expected {n} bytes, found {available}"),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

/// Parses a round message. Errors carry the byte offset where parsing
/// stopped; trailing bytes and non-zero padding bits are rejected so that
/// the encoding stays a bijection.
pub fn unpack_payload(bytes: &[u8]) -> Result<Payload> {
    let mut c = Cursor { bytes, pos: 0 };
    let magic = c.take(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::Parse {
            offset: 0,
            reason: format!("bad magic {magic:02x?}"),
        });
    }
    let version = c.u8("version")?;
    if version != VERSION {
        return Err(Error::Parse {
            offset: 4,
            reason: format!("unsupported version {version}, expected {VERSION}"),
        });
    }
    let round = c.u32("round")?;
    let client_id = c.u32("client_id")?;
    let layer_count = c.u16("layer_count")?;

    let mut layers = Vec::with_capacity(layer_count as usize);
    for _ in 0..layer_count {
        let layer_id = c.u16("layer_id")?;
        let count = c.u32("param_count")? as usize;
        let m_offset = c.pos;
        let m = c.u8("width")?;
        check_width(m).map_err(|e| Error::Parse {
            offset: m_offset,
            reason: e.to_string(),
        })?;
        let z = c.u8("z")?;
        let bitmap_offset = c.pos;
        let bitmap = c.take((m as usize).div_ceil(8), "mask bitmap")?;
        let mut mask = Vec::new();
        for i in 0..bitmap.len() * 8 {
            if bitmap[i / 8] & (0x80 >> (i % 8)) != 0 {
                if i >= m as usize {
                    return Err(Error::Parse {
                        offset: bitmap_offset + i / 8,
                        reason: format!("mask bit {i} set beyond width {m}"),
                    });
                }
                mask.push(i as u8);
            }
        }
        let body_offset = c.pos;
        let body_len = (count * m as usize).div_ceil(8);
        let body = c.take(body_len, "word body")?;
        let mut words = Vec::with_capacity(count);
        let mut acc: u64 = 0;
        let mut nbits: u32 = 0;
        let mut next = 0;
        let wmask = width_mask(m) as u64;
        for _ in 0..count {
            while nbits < m as u32 {
                acc = (acc << 8) | u64::from(body[next]);
                next += 1;
                nbits += 8;
            }
            nbits -= m as u32;
            words.push(((acc >> nbits) & wmask) as u32);
            acc &= (1u64 << nbits) - 1;
        }
        if acc != 0 {
            return Err(Error::Parse {
                offset: body_offset + body_len - 1,
                reason: "non-zero padding bits".into(),
            });
        }
        layers.push(PayloadLayer {
            layer_id,
            m,
            z,
            mask,
            words,
        });
    }
    if c.pos != bytes.len() {
        return Err(Error::Parse {
            offset: c.pos,
            reason: format!("{} trailing bytes", bytes.len() - c.pos),
        });
    }
    Ok(Payload {
        round,
        client_id,
        layers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layer(id: u16, m: u8, words: Vec<u32>) -> PayloadLayer {
        PayloadLayer {
            layer_id: id,
            m,
            z: 4,
            mask: vec![2, 3],
            words,
        }
    }

    #[test]
    fn header_layout_is_bit_exact() {
        let bytes = pack_payload(0x0102_0304, 7, &[layer(5, 16, vec![27813])]).unwrap();
        assert_eq!(&bytes[..4], b"CDPA");
        assert_eq!(bytes[4], 1);
        assert_eq!(&bytes[5..9], &[4, 3, 2, 1]);
        assert_eq!(&bytes[9..13], &[7, 0, 0, 0]);
        assert_eq!(&bytes[13..15], &[1, 0]);
        assert_eq!(&bytes[15..17], &[5, 0]);
        assert_eq!(&bytes[17..21], &[1, 0, 0, 0]);
        assert_eq!(bytes[21], 16);
        assert_eq!(bytes[22], 4);
        assert_eq!(&bytes[23..25], &[0b0011_0000, 0]);
        assert_eq!(&bytes[25..], &[0b0110_1100, 0b1010_0101]);
    }

    #[test]
    fn odd_widths_pack_msb_first_with_padding() {
        let bytes = pack_payload(0, 0, &[layer(0, 12, vec![0xABC, 0x123, 0xFFF])]).unwrap();
        let body = &bytes[bytes.len() - 5..];
        assert_eq!(body, &[0xAB, 0xC1, 0x23, 0xFF, 0xF0]);
        let back = unpack_payload(&bytes).unwrap();
        assert_eq!(back.layers[0].words, vec![0xABC, 0x123, 0xFFF]);
    }

    #[test]
    fn body_size_of_nine_thousand_params() {
        let l = PayloadLayer {
            layer_id: 0,
            m: 16,
            z: 4,
            mask: vec![],
            words: vec![0; 9000],
        };
        let bytes = pack_payload(1, 1, &[l]).unwrap();
        assert_eq!(bytes.len() - HEADER_LEN - 8 - 2, 18000);
    }

    #[test]
    fn empty_payload_roundtrips() {
        let bytes = pack_payload(3, 4, &[]).unwrap();
        assert_eq!(bytes.len(), HEADER_LEN);
        let p = unpack_payload(&bytes).unwrap();
        assert_eq!((p.round, p.client_id, p.layers.len()), (3, 4, 0));
    }

    #[test]
    fn parse_errors_name_offsets() {
        let mut bytes = pack_payload(1, 2, &[layer(0, 16, vec![1, 2, 3])]).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(unpack_payload(&bad), Err(Error::Parse { offset: 0, .. })));

        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(matches!(unpack_payload(&bad), Err(Error::Parse { offset: 4, .. })));

        let truncated = &bytes[..bytes.len() - 1];
        match unpack_payload(truncated) {
            Err(Error::Parse { reason, .. }) => {
                assert!(reason.contains("expected 6 bytes, found 5"), "{reason}")
            }
            other => panic!("unexpected {other:?}"),
        }

        bytes.push(0);
        assert!(matches!(unpack_payload(&bytes), Err(Error::Parse { .. })));
    }

    #[test]
    fn encode_errors() {
        assert!(matches!(
            pack_payload(0, 0, &[layer(0, 16, vec![0x1_0000])]),
            Err(Error::Encode(_))
        ));
        let mut l = layer(0, 16, vec![0]);
        l.mask = vec![16];
        assert!(matches!(pack_payload(0, 0, &[l]), Err(Error::Encode(_))));
        let l = layer(0, 40, vec![0]);
        assert!(matches!(pack_payload(0, 0, &[l]), Err(Error::Encode(_))));
    }

    #[test]
    fn encoded_len_matches() {
        let p = Payload {
            round: 1,
            client_id: 2,
            layers: vec![layer(0, 12, vec![1; 7]), layer(1, 32, vec![5; 3])],
        };
        assert_eq!(p.encoded_len(), p.to_bytes().unwrap().len());
    }
}

//! Noise draws: one flip bit per instance.
//!
//! Two on-disk encodings are supported:
//!
//! * text: one `0` or `1` per line, `n` lines;
//! * bitset: an 8-byte header (`b"NDRW"` then `n` as little-endian `u32`)
//!   followed by `ceil(n / 8)` bytes, bit `i` stored in byte `i / 8` at
//!   position `i % 8` (least significant bit first). Unused trailing bits are 0.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BITSET_MAGIC: [u8; 4] = *b"NDRW";

/// Where a draw came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// The realized flips that produced a noisy dataset.
    TrueDraw,
    /// A sample from the posterior noise model.
    Sampled,
    /// `u_i = 1{q_i > 0.5}`, the draw a hedged learner implicitly fits.
    ImplicitMle,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseDraw {
    bits: Vec<u8>,
    provenance: Provenance,
    /// Instances whose posterior was exactly 0.5 (only meaningful for `ImplicitMle`).
    #[serde(default)]
    ties: usize,
}

impl NoiseDraw {
    pub fn new(bits: Vec<u8>, provenance: Provenance) -> Result<Self> {
        if let Some(i) = bits.iter().position(|&b| b > 1) {
            return Err(Error::Domain(format!("draw bit {i} is not binary")));
        }
        Ok(Self {
            bits,
            provenance,
            ties: 0,
        })
    }

    pub fn zeros(n: usize, provenance: Provenance) -> Self {
        Self {
            bits: vec![0; n],
            provenance,
            ties: 0,
        }
    }

    pub(crate) fn with_ties(mut self, ties: usize) -> Self {
        self.ties = ties;
        self
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn ties(&self) -> usize {
        self.ties
    }

    pub fn flips(&self) -> usize {
        self.bits.iter().filter(|&&b| b == 1).count()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.bits.len() * 2);
        for b in &self.bits {
            s.push(if *b == 1 { '1' } else { '0' });
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str, provenance: Provenance) -> Result<Self> {
        let bits = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .enumerate()
            .map(|(i, l)| match l {
                "0" => Ok(0),
                "1" => Ok(1),
                other => Err(Error::Input(format!("draw line {}: `{other}`", i + 1))),
            })
            .collect::<Result<Vec<u8>>>()?;
        Self::new(bits, provenance)
    }

    pub fn to_bitset(&self) -> Vec<u8> {
        let n = self.bits.len();
        let mut out = Vec::with_capacity(8 + n.div_ceil(8));
        out.extend_from_slice(&BITSET_MAGIC);
        out.extend_from_slice(&(n as u32).to_le_bytes());
        let mut packed = vec![0u8; n.div_ceil(8)];
        for (i, &b) in self.bits.iter().enumerate() {
            packed[i / 8] |= b << (i % 8);
        }
        out.extend_from_slice(&packed);
        out
    }

    pub fn from_bitset(bytes: &[u8], provenance: Provenance) -> Result<Self> {
        if bytes.len() < 8 || bytes[..4] != BITSET_MAGIC {
            return Err(Error::Input("bitset draw: bad header".into()));
        }
        let n = u32::from_le_bytes([bytes[4], bytes[5], bytes[6], bytes[7]]) as usize;
        let body = &bytes[8..];
        if body.len() != n.div_ceil(8) {
            return Err(Error::Input(format!(
                "bitset draw: {} payload bytes for n = {n}",
                body.len()
            )));
        }
        let bits = (0..n).map(|i| (body[i / 8] >> (i % 8)) & 1).collect();
        Self::new(bits, provenance)
    }

    /// Reads either encoding, sniffing the bitset magic.
    pub fn read(path: impl AsRef<Path>, provenance: Provenance) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.starts_with(&BITSET_MAGIC) {
            Self::from_bitset(&bytes, provenance)
        } else {
            let text = String::from_utf8(bytes)
                .map_err(|_| Error::Input(format!("{}: not UTF-8 text", path.display())))?;
            Self::from_text(&text, provenance)
        }
    }

    pub fn write_text(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn write_bitset(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bitset()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bitset_layout() {
        let d = NoiseDraw::new(vec![1, 0, 0, 0, 0, 0, 0, 0, 1, 1], Provenance::Sampled).unwrap();
        let b = d.to_bitset();
        assert_eq!(&b[..4], b"NDRW");
        assert_eq!(&b[4..8], &10u32.to_le_bytes());
        assert_eq!(&b[8..], &[0b0000_0001, 0b0000_0011]);
    }

    #[test]
    fn rejects_corrupt_input() {
        assert!(NoiseDraw::from_text("0\n2\n", Provenance::Sampled).is_err());
        assert!(NoiseDraw::from_bitset(b"NDRW\x09\0\0\0\x01", Provenance::Sampled).is_err());
        assert!(NoiseDraw::new(vec![0, 3], Provenance::TrueDraw).is_err());
    }

    proptest! {
        #[test]
        fn encodings_roundtrip(bits in proptest::collection::vec(0u8..2, 0..200)) {
            let d = NoiseDraw::new(bits, Provenance::TrueDraw).unwrap();
            prop_assert_eq!(&NoiseDraw::from_bitset(&d.to_bitset(), Provenance::TrueDraw).unwrap(), &d);
            prop_assert_eq!(&NoiseDraw::from_text(&d.to_text(), Provenance::TrueDraw).unwrap(), &d);
        }
    }
}

//! Little-endian binary encoding shared by model manifests, checkpoints and
//! dataset containers, plus a versioned, checksummed envelope.
//!
//! Envelope layout: `magic[8] | version u32 | payload_len u64 | payload | sha256(payload)[32]`.

use sha2::{Digest, Sha256};

use crate::error::{AceError, Result};

#[derive(Debug, Default)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn bool(&mut self, v: bool) -> &mut Self {
        self.u8(v as u8)
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn usize(&mut self, v: usize) -> &mut Self {
        self.u64(v as u64)
    }

    pub fn f64(&mut self, v: f64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_bits().to_le_bytes());
        self
    }

    pub fn str(&mut self, s: &str) -> &mut Self {
        self.usize(s.len());
        self.buf.extend_from_slice(s.as_bytes());
        self
    }

    pub fn bytes(&mut self, b: &[u8]) -> &mut Self {
        self.usize(b.len());
        self.buf.extend_from_slice(b);
        self
    }

    pub fn f64s(&mut self, v: &[f64]) -> &mut Self {
        self.usize(v.len());
        v.iter().for_each(|x| {
            self.f64(*x);
        });
        self
    }

    pub fn usizes(&mut self, v: &[usize]) -> &mut Self {
        self.usize(v.len());
        v.iter().for_each(|x| {
            self.usize(*x);
        });
        self
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

#[derive(Debug)]
pub struct Decoder<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| AceError::Corrupt(format!("truncated at byte {}", self.pos)))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn bool(&mut self) -> Result<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(AceError::Corrupt(format!("invalid bool byte {b}"))),
        }
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| AceError::Corrupt("length overflow".into()))
    }

    /// Reads a length prefix and rejects lengths that cannot fit in the remaining bytes.
    fn len(&mut self, elem_size: usize) -> Result<usize> {
        let n = self.usize()?;
        let remaining = self.buf.len() - self.pos;
        if n.saturating_mul(elem_size) > remaining {
            return Err(AceError::Corrupt(format!("length {n} exceeds payload")));
        }
        Ok(n)
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }

    pub fn str(&mut self) -> Result<String> {
        let n = self.len(1)?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| AceError::Corrupt("invalid utf-8".into()))
    }

    pub fn bytes(&mut self) -> Result<Vec<u8>> {
        let n = self.len(1)?;
        Ok(self.take(n)?.to_vec())
    }

    pub fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.len(8)?;
        (0..n).map(|_| self.f64()).collect()
    }

    pub fn usizes(&mut self) -> Result<Vec<usize>> {
        let n = self.len(8)?;
        (0..n).map(|_| self.usize()).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.pos == self.buf.len()
    }

    pub fn finish(self) -> Result<()> {
        if self.is_empty() {
            Ok(())
        } else {
            Err(AceError::Corrupt(format!("{} trailing bytes", self.buf.len() - self.pos)))
        }
    }
}

pub type Magic = [u8; 8];

/// Wraps `payload` in a versioned, checksummed envelope.
pub fn seal(magic: &Magic, version: u32, payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(payload.len() + 52);
    out.extend_from_slice(magic);
    out.extend_from_slice(&version.to_le_bytes());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(payload);
    out.extend_from_slice(&Sha256::digest(payload)[..]);
    out
}

/// Validates an envelope and returns its payload.
pub fn open<'a>(magic: &Magic, version: u32, bytes: &'a [u8]) -> Result<&'a [u8]> {
    if bytes.len() < 20 + 32 || &bytes[..8] != magic {
        return Err(AceError::Corrupt("bad magic".into()));
    }
    let found = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if found != version {
        return Err(AceError::VersionMismatch { expected: version, found });
    }
    let len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    if bytes.len() != 20 + len + 32 {
        return Err(AceError::Corrupt("length does not match payload".into()));
    }
    let payload = &bytes[20..20 + len];
    if Sha256::digest(payload)[..] != bytes[20 + len..] {
        return Err(AceError::Corrupt("checksum mismatch".into()));
    }
    Ok(payload)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const MAGIC: Magic = *b"ACETEST\0";

    proptest! {
        #[test]
        fn values_round_trip_bitwise(xs in proptest::collection::vec(any::<f64>(), 0..20), s in ".{0,12}", n in any::<u64>()) {
            let mut enc = Encoder::new();
            enc.f64s(&xs).str(&s).u64(n).bool(true);
            let bytes = seal(&MAGIC, 3, &enc.finish());
            let payload = open(&MAGIC, 3, &bytes).unwrap();
            let mut dec = Decoder::new(payload);
            let back = dec.f64s().unwrap();
            prop_assert!(back.iter().zip(&xs).all(|(a, b)| a.to_bits() == b.to_bits()));
            prop_assert_eq!(dec.str().unwrap(), s);
            prop_assert_eq!(dec.u64().unwrap(), n);
            prop_assert!(dec.bool().unwrap());
            prop_assert!(dec.finish().is_ok());
        }
    }

    #[test]
    fn envelope_detects_damage() {
        let bytes = seal(&MAGIC, 1, b"payload bytes");
        assert!(matches!(open(&MAGIC, 2, &bytes), Err(AceError::VersionMismatch { expected: 2, found: 1 })));
        let mut flipped = bytes.clone();
        flipped[22] ^= 0x40;
        assert!(matches!(open(&MAGIC, 1, &flipped), Err(AceError::Corrupt(_))));
        assert!(matches!(open(&MAGIC, 1, &bytes[..bytes.len() - 1]), Err(AceError::Corrupt(_))));
        assert!(matches!(open(b"OTHERMAG", 1, &bytes), Err(AceError::Corrupt(_))));
    }

    #[test]
    fn decoder_rejects_oversized_lengths() {
        let mut enc = Encoder::new();
        enc.u64(u64::MAX / 2);
        let bytes = enc.finish();
        assert!(Decoder::new(&bytes).f64s().is_err());
    }
}

//! Canonical binary framing shared by every wire format in the crate.
//!
//! Integers are written as a 4-byte big-endian length followed by the
//! big-endian magnitude. The canonical form has no leading zero bytes; zero
//! itself is the single byte `0x00`.

use num_bigint::BigUint;
use num_traits::Zero;

use crate::error::{Error, Result};

/// Canonical big-endian magnitude of `n` (no leading zeros, zero is `[0]`).
pub fn uint_to_bytes(n: &BigUint) -> Vec<u8> {
    if n.is_zero() {
        vec![0]
    } else {
        n.to_bytes_be()
    }
}

/// Big-endian magnitude of `n` left-padded to exactly `width` bytes.
pub fn uint_to_fixed_bytes(n: &BigUint, width: usize) -> Result<Vec<u8>> {
    let raw = uint_to_bytes(n);
    let raw = if raw == [0] { Vec::new() } else { raw };
    if raw.len() > width {
        return Err(Error::domain(format!(
            "integer needs {} bytes, fixed width is {width}",
            raw.len()
        )));
    }
    let mut out = vec![0u8; width - raw.len()];
    out.extend_from_slice(&raw);
    Ok(out)
}

/// Canonical length-prefixed encoding of a single integer.
pub fn encode_uint(n: &BigUint) -> Vec<u8> {
    let mut w = Writer::new();
    w.put_uint(n);
    w.into_bytes()
}

/// Decodes exactly one canonical length-prefixed integer.
pub fn decode_uint(bytes: &[u8]) -> Result<BigUint> {
    let mut r = Reader::new(bytes);
    let n = r.get_uint()?;
    r.finish()?;
    Ok(n)
}

#[derive(Debug, Default, Clone)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn put_u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn put_u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    pub fn put_u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    pub fn put_u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    pub fn put_raw(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    /// Byte string with a 2-byte length prefix.
    pub fn put_short_bytes(&mut self, bytes: &[u8]) -> Result<()> {
        let len = u16::try_from(bytes.len())
            .map_err(|_| Error::domain("byte string longer than 65535 bytes"))?;
        self.put_u16(len);
        self.put_raw(bytes);
        Ok(())
    }

    /// Byte string with a 4-byte length prefix.
    pub fn put_bytes(&mut self, bytes: &[u8]) {
        self.put_u32(bytes.len() as u32);
        self.put_raw(bytes);
    }

    pub fn put_uint(&mut self, n: &BigUint) {
        self.put_bytes(&uint_to_bytes(n));
    }

    /// Integer left-padded to `width` bytes, still carrying its length prefix.
    pub fn put_uint_fixed(&mut self, n: &BigUint, width: usize) -> Result<()> {
        let bytes = uint_to_fixed_bytes(n, width)?;
        self.put_bytes(&bytes);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }
}

#[derive(Debug, Clone)]
pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub fn get_raw(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&end| end <= self.buf.len())
            .ok_or_else(|| Error::decode(format!("truncated input at offset {}", self.pos)))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub fn get_u8(&mut self) -> Result<u8> {
        Ok(self.get_raw(1)?[0])
    }

    pub fn get_u16(&mut self) -> Result<u16> {
        Ok(u16::from_be_bytes(self.get_raw(2)?.try_into().unwrap()))
    }

    pub fn get_u32(&mut self) -> Result<u32> {
        Ok(u32::from_be_bytes(self.get_raw(4)?.try_into().unwrap()))
    }

    pub fn get_u64(&mut self) -> Result<u64> {
        Ok(u64::from_be_bytes(self.get_raw(8)?.try_into().unwrap()))
    }

    pub fn get_short_bytes(&mut self) -> Result<&'a [u8]> {
        let len = self.get_u16()? as usize;
        self.get_raw(len)
    }

    pub fn get_bytes(&mut self) -> Result<&'a [u8]> {
        let len = self.get_u32()? as usize;
        self.get_raw(len)
    }

    /// Canonical integer: rejects empty magnitudes and leading zero bytes.
    pub fn get_uint(&mut self) -> Result<BigUint> {
        let bytes = self.get_bytes()?;
        match bytes {
            [] => Err(Error::decode("empty integer")),
            [0] => Ok(BigUint::zero()),
            [0, ..] => Err(Error::decode("non-canonical integer (leading zero)")),
            _ => Ok(BigUint::from_bytes_be(bytes)),
        }
    }

    /// Integer that may carry leading zero padding.
    pub fn get_uint_padded(&mut self) -> Result<BigUint> {
        let bytes = self.get_bytes()?;
        if bytes.is_empty() {
            return Ok(BigUint::zero());
        }
        Ok(BigUint::from_bytes_be(bytes))
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    /// Fails if any input is left unread.
    pub fn finish(&self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(Error::decode(format!("{} trailing bytes", self.remaining())));
        }
        Ok(())
    }
}

/// Serde adapter writing big integers as lowercase hex strings.
pub mod hex_uint {
    use num_bigint::BigUint;
    use num_traits::Num;
    use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(n: &BigUint, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&n.to_str_radix(16))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<BigUint, D::Error> {
        let s = String::deserialize(d)?;
        BigUint::from_str_radix(&s, 16).map_err(D::Error::custom)
    }
}

/// Serde adapter writing byte strings as lowercase hex.
pub mod hex_bytes {
    use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(b: &[u8], s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(b))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(s).map_err(D::Error::custom)
    }
}

//! The one digest function and the canonical byte encoding behind it.
//!
//! Everything hashed in this crate (blobs, transactions, blocks, derived
//! seeds) goes through SHA-256. Structured data is first serialized with
//! [`Enc`]: fields in declared order, integers big-endian and fixed width,
//! byte strings and UTF-8 strings prefixed with a big-endian u32 length,
//! floats as their IEEE-754 bit pattern. Hashes of structured data are
//! domain-separated with a short ASCII tag so a transaction can never
//! collide with, say, a block header.

use std::fmt;
use std::str::FromStr;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256};

/// A 256-bit SHA-256 digest.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub const ZERO: Digest = Digest([0u8; 32]);

    pub fn to_hex(self) -> String {
        hex::encode(self.0)
    }

    /// Parse the canonical rendering: exactly 64 lowercase hex digits.
    /// Uppercase is rejected so every digest has one byte-unique form.
    pub fn from_hex(s: &str) -> Result<Digest, hex::FromHexError> {
        if let Some(pos) = s.find(|c: char| !matches!(c, '0'..='9' | 'a'..='f')) {
            return Err(hex::FromHexError::InvalidHexCharacter {
                c: s[pos..].chars().next().unwrap(),
                index: pos,
            });
        }
        let raw = hex::decode(s)?;
        let arr: [u8; 32] = raw
            .try_into()
            .map_err(|_| hex::FromHexError::InvalidStringLength)?;
        Ok(Digest(arr))
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.to_hex())
    }
}

impl FromStr for Digest {
    type Err = hex::FromHexError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Digest::from_hex(s)
    }
}

impl Serialize for Digest {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Digest::from_hex(&s).map_err(D::Error::custom)
    }
}

/// Plain SHA-256 of raw bytes. Used for content addressing, where the
/// digest of the empty byte string must match the well-known constant.
pub fn digest_bytes(data: &[u8]) -> Digest {
    Digest(Sha256::digest(data).into())
}

/// SHA-256 over a domain tag followed by the payload.
pub fn digest_tagged(tag: &str, data: &[u8]) -> Digest {
    let mut h = Sha256::new();
    h.update(tag.as_bytes());
    h.update(data);
    Digest(h.finalize().into())
}

/// Canonical encoder. Append-only; callers write fields in declared order.
#[derive(Default)]
pub struct Enc {
    buf: Vec<u8>,
}

impl Enc {
    pub fn new() -> Enc {
        Enc::default()
    }

    pub fn put_u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn put_u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    pub fn put_u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    /// IEEE-754 bit pattern, big-endian.
    pub fn put_f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_bits().to_be_bytes());
    }

    pub fn put_bool(&mut self, v: bool) {
        self.buf.push(v as u8);
    }

    /// Length-prefixed byte string.
    pub fn put_bytes(&mut self, v: &[u8]) {
        self.put_u32(v.len() as u32);
        self.buf.extend_from_slice(v);
    }

    /// Length-prefixed UTF-8 string.
    pub fn put_str(&mut self, v: &str) {
        self.put_bytes(v.as_bytes());
    }

    pub fn put_raw(&mut self, v: &[u8]) {
        self.buf.extend_from_slice(v);
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.buf
    }
}

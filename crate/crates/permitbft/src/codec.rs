//! Canonical binary encoding shared by all protocol artifacts.
//!
//! Every message encodes as `type tag (1 byte) ‖ little-endian fixed-width
//! fields ‖ length-prefixed collections`, with set-like collections sorted so
//! that equal values always produce identical bytes. Digests (and therefore
//! block and transaction identities) are computed over these bytes, and trace
//! files embed them, so the encoding must stay byte-stable across runs and
//! platforms.

use sha2::{Digest as _, Sha256};
use thiserror::Error;

/// 32-byte SHA-256 digest of a canonical encoding.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub fn of(bytes: &[u8]) -> Self {
        let mut h = Sha256::new();
        h.update(bytes);
        Digest(h.finalize().into())
    }

    /// Short hex form used in traces and exports (first 8 bytes).
    pub fn short(&self) -> String {
        hex::encode(&self.0[..8])
    }

    pub fn full_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl std::fmt::Debug for Digest {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.short())
    }
}

impl std::fmt::Display for Digest {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.short())
    }
}

/// Type tags for wire messages and signed payloads. Payload tags are distinct
/// from message tags so a signature over one artifact can never be replayed as
/// another (domain separation).
pub mod tag {
    pub const PERMIT: u8 = 0x01;
    pub const PROOF: u8 = 0x02;
    pub const BLOCK: u8 = 0x03;
    pub const PROPOSAL: u8 = 0x04;
    pub const TIMEOUT: u8 = 0x05;
    pub const TIMEOUT_BUNDLE: u8 = 0x06;
    pub const TRANSACTION: u8 = 0x07;
    pub const OUTPUT_REF: u8 = 0x08;
    pub const POSITION: u8 = 0x09;
    pub const SIGNATURE: u8 = 0x0a;
    pub const FETCH_REQUEST: u8 = 0x0b;
    pub const FETCH_RESPONSE: u8 = 0x0c;

    pub const PERMIT_PAYLOAD: u8 = 0x41;
    pub const BLOCK_PAYLOAD: u8 = 0x43;
    pub const PROPOSAL_PAYLOAD: u8 = 0x44;
    pub const TIMEOUT_PAYLOAD: u8 = 0x45;
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("unexpected end of input at offset {0}")]
    Eof(usize),
    #[error("bad type tag: expected {expected:#x}, found {found:#x}")]
    BadTag { expected: u8, found: u8 },
    #[error("invalid enum discriminant {0}")]
    BadDiscriminant(u8),
}

/// Value with a canonical byte encoding.
pub trait Encode {
    fn encode_into(&self, out: &mut Vec<u8>);

    fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.encode_into(&mut out);
        out
    }

    fn digest(&self) -> Digest {
        Digest::of(&self.encode())
    }
}

/// Value decodable from its canonical encoding.
pub trait Decode: Sized {
    fn decode(r: &mut Reader<'_>) -> Result<Self, CodecError>;

    fn decode_all(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::new(bytes);
        let v = Self::decode(&mut r)?;
        if !r.is_empty() {
            return Err(CodecError::Eof(r.pos));
        }
        Ok(v)
    }
}

/// Cursor over an encoded byte slice.
pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub fn is_empty(&self) -> bool {
        self.pos == self.buf.len()
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        if self.pos + n > self.buf.len() {
            return Err(CodecError::Eof(self.pos));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }

    pub fn expect_tag(&mut self, expected: u8) -> Result<(), CodecError> {
        let found = self.u8()?;
        if found != expected {
            return Err(CodecError::BadTag { expected, found });
        }
        Ok(())
    }

    pub fn u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64, CodecError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn digest(&mut self) -> Result<Digest, CodecError> {
        Ok(Digest(self.take(32)?.try_into().unwrap()))
    }
}

pub fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub fn put_digest(out: &mut Vec<u8>, d: &Digest) {
    out.extend_from_slice(&d.0);
}

/// Length-prefixed list, elements in the order given.
pub fn put_list<T: Encode>(out: &mut Vec<u8>, items: &[T]) {
    put_u32(out, items.len() as u32);
    for it in items {
        it.encode_into(out);
    }
}

/// Length-prefixed set: element encodings are sorted lexicographically before
/// writing, so any iteration order of the source collection yields the same
/// bytes (byzantine multisets included).
pub fn put_sorted_set<'a, T: Encode + 'a>(
    out: &mut Vec<u8>,
    items: impl Iterator<Item = &'a T>,
) {
    let mut encs: Vec<Vec<u8>> = items.map(|it| it.encode()).collect();
    encs.sort();
    put_u32(out, encs.len() as u32);
    for e in encs {
        out.extend_from_slice(&e);
    }
}

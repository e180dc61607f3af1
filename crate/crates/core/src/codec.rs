//! Byte-level helpers for the canonical wire encoding.
//!
//! All integers are big-endian. Variable-length fields are prefixed with a
//! `u32` length. Readers are total: any truncation or overlong length yields
//! [`DecodeError`] instead of a panic.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::crypto::{PublicKey, Signature, PUBLIC_KEY_LEN, SIGNATURE_LEN};
use crate::types::{Pair, ProcessId};

/// Upper bound on any element count read from the wire.
pub const MAX_COUNT: u32 = 1 << 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("truncated input")]
    Truncated,
    #[error("unknown tag {0:#04x}")]
    UnknownTag(u8),
    #[error("count {0} exceeds limit")]
    TooMany(u32),
    #[error("trailing bytes after message")]
    Trailing,
    #[error("invalid field: {0}")]
    Invalid(&'static str),
}

#[derive(Default)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_tag(tag: u8) -> Self {
        let mut w = Self::new();
        w.u8(tag);
        w
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn len_of(&mut self, n: usize) -> &mut Self {
        self.u32(u32::try_from(n).expect("length fits in u32"))
    }

    pub fn bytes(&mut self, b: &[u8]) -> &mut Self {
        self.len_of(b.len());
        self.buf.extend_from_slice(b);
        self
    }

    pub fn raw(&mut self, b: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(b);
        self
    }

    pub fn pid(&mut self, p: ProcessId) -> &mut Self {
        self.u32(p.0)
    }

    pub fn pair(&mut self, p: &Pair) -> &mut Self {
        self.pid(p.proposer);
        self.bytes(&p.value)
    }

    pub fn pair_set<'a>(&mut self, pairs: impl ExactSizeIterator<Item = &'a Pair>) -> &mut Self {
        self.len_of(pairs.len());
        for p in pairs {
            self.pair(p);
        }
        self
    }

    pub fn sig(&mut self, s: &Signature) -> &mut Self {
        self.raw(&s.0)
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.remaining() < n {
            return Err(DecodeError::Truncated);
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn count(&mut self) -> Result<usize, DecodeError> {
        let n = self.u32()?;
        if n > MAX_COUNT {
            return Err(DecodeError::TooMany(n));
        }
        Ok(n as usize)
    }

    pub fn bytes(&mut self) -> Result<&'a [u8], DecodeError> {
        let n = self.u32()? as usize;
        self.take(n)
    }

    pub fn pid(&mut self) -> Result<ProcessId, DecodeError> {
        let v = self.u32()?;
        if v == 0 {
            return Err(DecodeError::Invalid("process id 0"));
        }
        Ok(ProcessId(v))
    }

    pub fn pair(&mut self) -> Result<Pair, DecodeError> {
        let proposer = self.pid()?;
        let value = self.bytes()?.to_vec();
        Ok(Pair { proposer, value })
    }

    pub fn pair_set(&mut self) -> Result<BTreeSet<Pair>, DecodeError> {
        let n = self.count()?;
        let mut out = BTreeSet::new();
        for _ in 0..n {
            out.insert(self.pair()?);
        }
        Ok(out)
    }

    pub fn sig(&mut self) -> Result<Signature, DecodeError> {
        Ok(Signature(self.take(SIGNATURE_LEN)?.try_into().expect("64 bytes")))
    }

    pub fn public_key(&mut self) -> Result<PublicKey, DecodeError> {
        Ok(PublicKey(self.take(PUBLIC_KEY_LEN)?.try_into().expect("32 bytes")))
    }

    pub fn end(&self) -> Result<(), DecodeError> {
        if self.remaining() == 0 {
            Ok(())
        } else {
            Err(DecodeError::Trailing)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_round_trip_is_bit_exact() {
        let p = Pair::new(*b"ab", ProcessId(3));
        let mut w = Writer::new();
        w.pair(&p);
        let bytes = w.finish();
        assert_eq!(bytes, [0, 0, 0, 3, 0, 0, 0, 2, b'a', b'b']);
        let mut r = Reader::new(&bytes);
        assert_eq!(r.pair().unwrap(), p);
        assert!(r.end().is_ok());
    }

    #[test]
    fn truncation_and_limits() {
        assert_eq!(Reader::new(&[0, 0, 1]).u32(), Err(DecodeError::Truncated));
        assert_eq!(
            Reader::new(&[0, 0, 0, 1, 0, 0, 0, 9, 1]).pair(),
            Err(DecodeError::Truncated)
        );
        assert_eq!(
            Reader::new(&[0xff, 0xff, 0xff, 0xff]).count(),
            Err(DecodeError::TooMany(u32::MAX))
        );
        assert!(Reader::new(&[0, 0, 0, 0]).pid().is_err());
    }
}

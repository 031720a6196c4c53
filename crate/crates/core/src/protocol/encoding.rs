//! Length-prefixed canonical field encoding.

use thiserror::Error;

use crate::ids::{Identity, Resource};
use crate::time::Timestamp;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DecodeError {
    #[error("message truncated")]
    Truncated,
    #[error("{0} trailing bytes after message")]
    TrailingBytes(usize),
    #[error("unknown message tag 0x{0:02x}")]
    UnknownTag(u8),
    #[error("unsupported protocol version {0}")]
    UnsupportedVersion(u8),
    #[error("field has wrong length: expected {expected}, got {got}")]
    FieldLength { expected: usize, got: usize },
    #[error("field is not valid UTF-8")]
    Utf8,
    #[error("invalid field value: {0}")]
    InvalidValue(String),
}

/// Builds a canonical encoding one field at a time.
#[derive(Debug, Default, Clone)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new() -> Self {
        Encoder::default()
    }

    /// Starts a message with its type tag and version byte.
    pub fn message(tag: u8, version: u8) -> Self {
        Encoder {
            buf: vec![tag, version],
        }
    }

    /// Continues an encoding that already holds `prefix`.
    pub fn extend(prefix: Vec<u8>) -> Self {
        Encoder { buf: prefix }
    }

    pub fn bytes(mut self, value: &[u8]) -> Self {
        self.buf.extend_from_slice(&(value.len() as u32).to_be_bytes());
        self.buf.extend_from_slice(value);
        self
    }

    pub fn str(self, value: &str) -> Self {
        self.bytes(value.as_bytes())
    }

    pub fn identity(self, value: &Identity) -> Self {
        self.str(value.as_str())
    }

    pub fn resource(self, value: Resource) -> Self {
        self.str(value.as_str())
    }

    pub fn u64(self, value: u64) -> Self {
        self.bytes(&value.to_be_bytes())
    }

    pub fn f64(self, value: f64) -> Self {
        self.bytes(&value.to_bits().to_be_bytes())
    }

    pub fn timestamp(self, value: Timestamp) -> Self {
        self.u64(value.as_micros())
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

/// Reads fields back in the order they were written.
#[derive(Debug, Clone)]
pub struct Decoder<'a> {
    rest: &'a [u8],
}

impl<'a> Decoder<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Decoder { rest: bytes }
    }

    /// Consumes a raw byte without a length prefix (tag or version).
    pub fn raw_u8(&mut self) -> Result<u8, DecodeError> {
        let (&b, rest) = self.rest.split_first().ok_or(DecodeError::Truncated)?;
        self.rest = rest;
        Ok(b)
    }

    pub fn bytes(&mut self) -> Result<&'a [u8], DecodeError> {
        if self.rest.len() < 4 {
            return Err(DecodeError::Truncated);
        }
        let len = u32::from_be_bytes(self.rest[..4].try_into().unwrap()) as usize;
        let body = &self.rest[4..];
        if body.len() < len {
            return Err(DecodeError::Truncated);
        }
        let (field, rest) = body.split_at(len);
        self.rest = rest;
        Ok(field)
    }

    pub fn fixed<const N: usize>(&mut self) -> Result<[u8; N], DecodeError> {
        let field = self.bytes()?;
        field.try_into().map_err(|_| DecodeError::FieldLength {
            expected: N,
            got: field.len(),
        })
    }

    pub fn str(&mut self) -> Result<&'a str, DecodeError> {
        std::str::from_utf8(self.bytes()?).map_err(|_| DecodeError::Utf8)
    }

    pub fn identity(&mut self) -> Result<Identity, DecodeError> {
        Ok(Identity::from(self.str()?))
    }

    pub fn resource(&mut self) -> Result<Resource, DecodeError> {
        let s = self.str()?;
        // only the canonical spelling, so a decoded message re-encodes to
        // the bytes that were signed
        Resource::from_canonical(s).ok_or_else(|| DecodeError::InvalidValue(format!("resource `{s}`")))
    }

    pub fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_be_bytes(self.fixed::<8>()?))
    }

    pub fn f64(&mut self) -> Result<f64, DecodeError> {
        let v = f64::from_bits(self.u64()?);
        if v.is_nan() {
            return Err(DecodeError::InvalidValue("NaN".into()));
        }
        Ok(v)
    }

    pub fn timestamp(&mut self) -> Result<Timestamp, DecodeError> {
        Ok(Timestamp(self.u64()?))
    }

    /// Number of bytes consumed so far relative to `start`.
    pub fn offset_from(&self, start: &[u8]) -> usize {
        start.len() - self.rest.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rest.is_empty()
    }

    pub fn finish(self) -> Result<(), DecodeError> {
        if self.rest.is_empty() {
            Ok(())
        } else {
            Err(DecodeError::TrailingBytes(self.rest.len()))
        }
    }
}

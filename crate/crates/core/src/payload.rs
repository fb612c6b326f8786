//! Payload envelope and its class-key stream cipher.
//!
//! Wire layout (all multi-byte integers big-endian):
//!
//! ```text
//! offset  size      field
//! 0       4         magic "SPEV"
//! 4       1         version (1)
//! 5       1         kind (1 = image, 2 = text, 3 = service)
//! 6       1         name_len
//! 7       name_len  name (UTF-8)
//! 7+n     4         body_len
//! 11+n    body_len  body
//! 11+n+b  4         CRC-32 (IEEE) over every preceding byte
//! ```
//!
//! The whole envelope is then XORed with a keystream derived from the key
//! value and epoch. The cipher is demonstration-grade: it hides the payload
//! from receivers without the key, nothing more. It is not authenticated.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::poly_keys::{ClassKey, UserKey};

pub const MAGIC: [u8; 4] = *b"SPEV";
pub const VERSION: u8 = 1;
/// Everything but the name and body: magic, version, kind, name_len, body_len, crc.
pub const FIXED_OVERHEAD: usize = 15;
/// Bytes needed before `name_len` is known.
pub const PREFIX_LEN: usize = 7;

const KEYSTREAM_DOMAIN: &[u8] = b"stegokey/keystream/v1";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PayloadError {
    #[error("name is {0} bytes, at most 255 allowed")]
    NameTooLong(usize),
    #[error("body of {0} bytes does not fit a 32-bit length")]
    BodyTooLarge(usize),
    #[error("only service payloads may have an empty body")]
    EmptyBody,
    #[error("envelope magic mismatch (wrong key or corrupted data)")]
    BadMagic,
    #[error("envelope checksum mismatch")]
    BadChecksum,
    #[error("envelope truncated: need {need} bytes, have {have}")]
    TruncatedEnvelope { need: usize, have: usize },
    #[error("unsupported envelope version {0}")]
    UnsupportedVersion(u8),
    #[error("unknown payload kind {0}")]
    UnknownKind(u8),
    #[error("payload name is not valid UTF-8")]
    BadName,
}

pub type Result<T, E = PayloadError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PayloadKind {
    Image,
    Text,
    Service,
}

impl PayloadKind {
    fn to_byte(self) -> u8 {
        match self {
            Self::Image => 1,
            Self::Text => 2,
            Self::Service => 3,
        }
    }

    fn from_byte(b: u8) -> Result<Self> {
        match b {
            1 => Ok(Self::Image),
            2 => Ok(Self::Text),
            3 => Ok(Self::Service),
            other => Err(PayloadError::UnknownKind(other)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Payload {
    pub kind: PayloadKind,
    pub name: String,
    pub body: Vec<u8>,
}

impl Payload {
    pub fn new(kind: PayloadKind, name: impl Into<String>, body: impl Into<Vec<u8>>) -> Self {
        Self { kind, name: name.into(), body: body.into() }
    }

    pub fn service(text: &str) -> Self {
        Self::new(PayloadKind::Service, "", text.as_bytes())
    }

    fn check(&self) -> Result<()> {
        if self.name.len() > usize::from(u8::MAX) {
            return Err(PayloadError::NameTooLong(self.name.len()));
        }
        if u32::try_from(self.body.len()).is_err() {
            return Err(PayloadError::BodyTooLarge(self.body.len()));
        }
        if self.body.is_empty() && self.kind != PayloadKind::Service {
            return Err(PayloadError::EmptyBody);
        }
        Ok(())
    }

    pub fn sealed_len(&self) -> usize {
        FIXED_OVERHEAD + self.name.len() + self.body.len()
    }

    /// Plaintext envelope bytes.
    pub fn encode(&self) -> Result<Vec<u8>> {
        self.check()?;
        let mut out = Vec::with_capacity(self.sealed_len());
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.push(self.kind.to_byte());
        out.push(self.name.len() as u8);
        out.extend_from_slice(self.name.as_bytes());
        out.extend_from_slice(&(self.body.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.body);
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_be_bytes());
        Ok(out)
    }

    /// Parses plaintext envelope bytes; anything past the checksum is ignored.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() >= MAGIC.len() && bytes[..4] != MAGIC {
            return Err(PayloadError::BadMagic);
        }
        let need = envelope_len(bytes)?;
        if bytes.len() < need {
            return Err(PayloadError::TruncatedEnvelope { need, have: bytes.len() });
        }
        let bytes = &bytes[..need];
        let (data, crc) = bytes.split_at(need - 4);
        if crc32fast::hash(data).to_be_bytes() != crc {
            return Err(PayloadError::BadChecksum);
        }
        if data[4] != VERSION {
            return Err(PayloadError::UnsupportedVersion(data[4]));
        }
        let kind = PayloadKind::from_byte(data[5])?;
        let name_len = usize::from(data[6]);
        let name = std::str::from_utf8(&data[7..7 + name_len]).map_err(|_| PayloadError::BadName)?;
        let body = data[7 + name_len + 4..].to_vec();
        Ok(Self { kind, name: name.to_owned(), body })
    }
}

/// Total envelope length implied by a plaintext header, once enough of it is present.
pub fn envelope_len(header: &[u8]) -> Result<usize> {
    if header.len() < PREFIX_LEN {
        return Err(PayloadError::TruncatedEnvelope { need: PREFIX_LEN, have: header.len() });
    }
    let name_len = usize::from(header[6]);
    let len_at = PREFIX_LEN + name_len;
    if header.len() < len_at + 4 {
        return Err(PayloadError::TruncatedEnvelope { need: len_at + 4, have: header.len() });
    }
    let mut body_len = [0u8; 4];
    body_len.copy_from_slice(&header[len_at..len_at + 4]);
    Ok(FIXED_OVERHEAD + name_len + u32::from_be_bytes(body_len) as usize)
}

/// Key material driving the keystream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub value: u64,
    pub epoch: u64,
}

impl From<&ClassKey> for StreamKey {
    fn from(k: &ClassKey) -> Self {
        Self { value: k.value, epoch: k.epoch }
    }
}

impl From<ClassKey> for StreamKey {
    fn from(k: ClassKey) -> Self {
        (&k).into()
    }
}

impl From<&UserKey> for StreamKey {
    fn from(k: &UserKey) -> Self {
        Self { value: k.value, epoch: k.epoch }
    }
}

impl From<UserKey> for StreamKey {
    fn from(k: UserKey) -> Self {
        (&k).into()
    }
}

/// XORs `data` in place with the keystream, starting at stream byte `offset`.
pub fn apply_keystream(key: StreamKey, offset: usize, data: &mut [u8]) {
    let mut pos = offset;
    let mut i = 0;
    while i < data.len() {
        let block = keystream_block(key, (pos / 32) as u64);
        let start = pos % 32;
        let n = (32 - start).min(data.len() - i);
        for (d, k) in data[i..i + n].iter_mut().zip(&block[start..start + n]) {
            *d ^= k;
        }
        i += n;
        pos += n;
    }
}

fn keystream_block(key: StreamKey, index: u64) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(KEYSTREAM_DOMAIN);
    h.update(key.value.to_le_bytes());
    h.update(key.epoch.to_le_bytes());
    h.update(index.to_le_bytes());
    h.finalize().into()
}

pub fn seal(payload: &Payload, key: impl Into<StreamKey>) -> Result<Vec<u8>> {
    let mut bytes = payload.encode()?;
    apply_keystream(key.into(), 0, &mut bytes);
    Ok(bytes)
}

/// Decrypts, then checks magic before the checksum so a wrong key fails on
/// the first four bytes.
pub fn open(sealed: &[u8], key: impl Into<StreamKey>) -> Result<Payload> {
    let mut bytes = sealed.to_vec();
    apply_keystream(key.into(), 0, &mut bytes);
    Payload::decode(&bytes)
}

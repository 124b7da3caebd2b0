//! Binary chunk layout (all integers big-endian):
//!
//! ```text
//! magic "XCHK" | u8 version=1 | u8 id-type | 20B id | u32 ttl-ms
//! | u16 name-len, name | u8 has-key-ref [u16 len, DAG URL text]
//! | u8 has-fp [20B fp] | u16 sig-len, sig | u32 payload-len, payload
//! ```

use thiserror::Error;

use super::chunk::{Chunk, ChunkLimits, NamedHeader, MAX_NAME_LEN};
use super::ChunkError;
use crate::addressing::{Xid, XidType, XID_LEN};
use crate::urls::{parse_dag_url, serialize_dag_url, UrlError};

pub const CHUNK_MAGIC: [u8; 4] = [0x58, 0x43, 0x48, 0x4B];
pub const CHUNK_VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("buffer ends at byte {at} while reading {field}")]
    ShortBuffer { field: &'static str, at: usize },
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported version {0}")]
    UnsupportedVersion(u8),
    #[error("unknown identifier type code {0}")]
    UnknownType(u8),
    #[error("{field} length {len} exceeds limit {max}")]
    FieldOverflow { field: &'static str, len: usize, max: usize },
    #[error("{0} is not a 0/1 flag")]
    BadFlag(&'static str),
    #[error("name is not valid UTF-8")]
    InvalidUtf8,
    #[error("bad key reference: {0}")]
    BadKeyRef(UrlError),
    #[error("inconsistent header: {0}")]
    Inconsistent(ChunkError),
    #[error("{0} trailing bytes")]
    TrailingBytes(usize),
}

pub fn encode_chunk(chunk: &Chunk) -> Vec<u8> {
    let key_ref = chunk.key_ref().map(serialize_dag_url);
    let name = chunk.name().unwrap_or("");
    let sig = chunk.signature().unwrap_or(&[]);
    let mut out = Vec::with_capacity(
        40 + name.len() + key_ref.as_ref().map_or(0, String::len) + sig.len() + chunk.payload().len(),
    );
    out.extend_from_slice(&CHUNK_MAGIC);
    out.push(CHUNK_VERSION);
    out.push(chunk.id().xtype().code());
    out.extend_from_slice(chunk.id().value());
    out.extend_from_slice(&chunk.ttl_ms().to_be_bytes());
    out.extend_from_slice(&(name.len() as u16).to_be_bytes());
    out.extend_from_slice(name.as_bytes());
    match &key_ref {
        Some(text) => {
            out.push(1);
            out.extend_from_slice(&(text.len() as u16).to_be_bytes());
            out.extend_from_slice(text.as_bytes());
        }
        None => out.push(0),
    }
    match chunk.fingerprint() {
        Some(fp) => {
            out.push(1);
            out.extend_from_slice(fp);
        }
        None => out.push(0),
    }
    out.extend_from_slice(&(sig.len() as u16).to_be_bytes());
    out.extend_from_slice(sig);
    out.extend_from_slice(&(chunk.payload().len() as u32).to_be_bytes());
    out.extend_from_slice(chunk.payload());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, field: &'static str) -> Result<&'a [u8], DecodeError> {
        if self.buf.len() - self.at < n {
            return Err(DecodeError::ShortBuffer { field, at: self.buf.len() });
        }
        let slice = &self.buf[self.at..self.at + n];
        self.at += n;
        Ok(slice)
    }

    fn u8(&mut self, field: &'static str) -> Result<u8, DecodeError> {
        Ok(self.take(1, field)?[0])
    }

    fn u16(&mut self, field: &'static str) -> Result<u16, DecodeError> {
        let b = self.take(2, field)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, field: &'static str) -> Result<u32, DecodeError> {
        let b = self.take(4, field)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn flag(&mut self, field: &'static str) -> Result<bool, DecodeError> {
        match self.u8(field)? {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(DecodeError::BadFlag(field)),
        }
    }

    /// Reads a declared length, checking it against `max` before the buffer.
    fn sized(&mut self, len: usize, max: usize, field: &'static str) -> Result<&'a [u8], DecodeError> {
        if len > max {
            return Err(DecodeError::FieldOverflow { field, len, max });
        }
        self.take(len, field)
    }
}

pub fn decode_chunk(bytes: &[u8]) -> Result<Chunk, DecodeError> {
    decode_chunk_with(bytes, &ChunkLimits::default())
}

pub fn decode_chunk_with(bytes: &[u8], limits: &ChunkLimits) -> Result<Chunk, DecodeError> {
    let mut r = Reader { buf: bytes, at: 0 };
    if r.take(4, "magic")? != CHUNK_MAGIC {
        return Err(DecodeError::BadMagic);
    }
    let version = r.u8("version")?;
    if version != CHUNK_VERSION {
        return Err(DecodeError::UnsupportedVersion(version));
    }
    let code = r.u8("id-type")?;
    let xtype = XidType::from_code(code).ok_or(DecodeError::UnknownType(code))?;
    let mut value = [0u8; XID_LEN];
    value.copy_from_slice(r.take(XID_LEN, "id")?);
    let id = Xid::new(xtype, value);
    let ttl_ms = r.u32("ttl")?;

    let name_len = r.u16("name-len")? as usize;
    let name_bytes = r.sized(name_len, MAX_NAME_LEN, "name")?;
    let name = std::str::from_utf8(name_bytes).map_err(|_| DecodeError::InvalidUtf8)?.to_string();

    let key_ref = if r.flag("has-key-ref")? {
        let len = r.u16("key-ref-len")? as usize;
        let text = r.take(len, "key-ref")?;
        let text = std::str::from_utf8(text).map_err(|_| DecodeError::InvalidUtf8)?;
        Some(parse_dag_url(text).map_err(DecodeError::BadKeyRef)?)
    } else {
        None
    };
    let fingerprint = if r.flag("has-fp")? {
        let mut fp = [0u8; XID_LEN];
        fp.copy_from_slice(r.take(XID_LEN, "fingerprint")?);
        Some(fp)
    } else {
        None
    };
    let sig_len = r.u16("sig-len")? as usize;
    let signature = r.take(sig_len, "signature")?.to_vec();
    let payload_len = r.u32("payload-len")? as usize;
    let payload = r.sized(payload_len, limits.max_payload, "payload")?.to_vec();
    if r.at != bytes.len() {
        return Err(DecodeError::TrailingBytes(bytes.len() - r.at));
    }

    match xtype {
        XidType::Ncid => {
            let (Some(key_ref), Some(fingerprint)) = (key_ref, fingerprint) else {
                return Err(DecodeError::Inconsistent(ChunkError::MissingNamedFields));
            };
            Chunk::from_named_parts(id, ttl_ms, NamedHeader { name, key_ref, fingerprint, signature }, payload)
                .map_err(DecodeError::Inconsistent)
        }
        _ => {
            if !name.is_empty() || key_ref.is_some() || fingerprint.is_some() || !signature.is_empty() {
                return Err(DecodeError::Inconsistent(ChunkError::UnexpectedNamedFields));
            }
            Chunk::from_cid_parts(id, ttl_ms, payload).map_err(DecodeError::Inconsistent)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::addressing::DagAddress;
    use crate::chunking::{build_cid_chunk, build_key_chunk, build_ncid_chunk, PublisherKey};

    fn named() -> Chunk {
        let key = PublisherKey::from_secret([9; 32]);
        let key_ref = DagAddress::with_fallback(
            build_key_chunk(&key, 1).id(),
            &["AD-pub".parse().unwrap(), "HID-pub".parse().unwrap()],
        )
        .unwrap();
        build_ncid_chunk("fb.com/cmu", b"named payload".to_vec(), 9000, &key, key_ref, &ChunkLimits::default())
            .unwrap()
    }

    #[test]
    fn minimal_cid_chunk_round_trips() {
        let c = build_cid_chunk(Vec::new(), 0, &ChunkLimits::default()).unwrap();
        let bytes = encode_chunk(&c);
        assert_eq!(bytes.len(), 4 + 1 + 1 + 20 + 4 + 2 + 1 + 1 + 2 + 4);
        assert_eq!(decode_chunk(&bytes).unwrap(), c);
    }

    #[test]
    fn named_chunk_round_trips() {
        let c = named();
        assert_eq!(decode_chunk(&encode_chunk(&c)).unwrap(), c);
    }

    #[test]
    fn corrupt_magic_and_version() {
        let mut bytes = encode_chunk(&named());
        bytes[0] ^= 0xff;
        assert_eq!(decode_chunk(&bytes), Err(DecodeError::BadMagic));
        let mut bytes = encode_chunk(&named());
        bytes[4] = 2;
        assert_eq!(decode_chunk(&bytes), Err(DecodeError::UnsupportedVersion(2)));
        let mut bytes = encode_chunk(&named());
        bytes[5] = 99;
        assert_eq!(decode_chunk(&bytes), Err(DecodeError::UnknownType(99)));
    }

    #[test]
    fn every_truncation_is_short_buffer() {
        let bytes = encode_chunk(&named());
        for len in 4..bytes.len() {
            assert!(
                matches!(decode_chunk(&bytes[..len]), Err(DecodeError::ShortBuffer { .. })),
                "len {len}"
            );
        }
        assert!(matches!(decode_chunk(&bytes[..2]), Err(DecodeError::ShortBuffer { .. })));
    }

    #[test]
    fn oversized_payload_is_field_overflow() {
        let c = build_cid_chunk(vec![1; 100], 1, &ChunkLimits::default()).unwrap();
        let err = decode_chunk_with(&encode_chunk(&c), &ChunkLimits { max_payload: 99 });
        assert_eq!(err, Err(DecodeError::FieldOverflow { field: "payload", len: 100, max: 99 }));
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut bytes = encode_chunk(&named());
        bytes.push(0);
        assert_eq!(decode_chunk(&bytes), Err(DecodeError::TrailingBytes(1)));
    }

    #[test]
    fn cid_with_named_fields_is_inconsistent() {
        let c = build_cid_chunk(b"x".to_vec(), 1, &ChunkLimits::default()).unwrap();
        let mut bytes = encode_chunk(&c);
        // has-fp flag sits after the empty name and the has-key-ref flag
        let fp_flag = 4 + 1 + 1 + 20 + 4 + 2 + 1;
        bytes[fp_flag] = 1;
        bytes.splice(fp_flag + 1..fp_flag + 1, [0u8; 20]);
        assert!(matches!(decode_chunk(&bytes), Err(DecodeError::Inconsistent(_))));
    }
}

use super::hash::{compute_cid, compute_ncid, Fingerprint};
use super::keys::PublisherKey;
use super::ChunkError;
use crate::addressing::{DagAddress, Xid, XidType};

/// Default payload limit: 1 MiB.
pub const DEFAULT_MAX_PAYLOAD: usize = 1 << 20;
/// Longest name a named chunk may carry, in bytes.
pub const MAX_NAME_LEN: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChunkLimits {
    pub max_payload: usize,
}

impl Default for ChunkLimits {
    fn default() -> Self {
        Self { max_payload: DEFAULT_MAX_PAYLOAD }
    }
}

impl ChunkLimits {
    pub fn check_payload(&self, len: usize) -> Result<(), ChunkError> {
        if len > self.max_payload {
            return Err(ChunkError::PayloadTooLarge { len, max: self.max_payload });
        }
        Ok(())
    }
}

/// A self-contained content object: header fields plus payload.
///
/// CID chunks carry only id, ttl and payload. nCID chunks additionally carry
/// the name, a reference to the publisher's key chunk, the publisher's key
/// fingerprint and a detached signature. Construction enforces which fields
/// are present; whether they are *correct* is what verification decides.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chunk {
    id: Xid,
    ttl_ms: u32,
    named: Option<NamedHeader>,
    payload: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NamedHeader {
    pub name: String,
    pub key_ref: DagAddress,
    pub fingerprint: Fingerprint,
    pub signature: Vec<u8>,
}

impl Chunk {
    /// Assembles a CID chunk from raw parts without checking the hash.
    pub fn from_cid_parts(id: Xid, ttl_ms: u32, payload: Vec<u8>) -> Result<Self, ChunkError> {
        if id.xtype() != XidType::Cid {
            return Err(ChunkError::WrongType(id.xtype()));
        }
        Ok(Self { id, ttl_ms, named: None, payload })
    }

    /// Assembles an nCID chunk from raw parts without any crypto checks.
    pub fn from_named_parts(
        id: Xid,
        ttl_ms: u32,
        header: NamedHeader,
        payload: Vec<u8>,
    ) -> Result<Self, ChunkError> {
        if id.xtype() != XidType::Ncid {
            return Err(ChunkError::WrongType(id.xtype()));
        }
        if header.name.is_empty() {
            return Err(ChunkError::EmptyName);
        }
        if header.name.len() > MAX_NAME_LEN {
            return Err(ChunkError::NameTooLong(header.name.len()));
        }
        if header.signature.len() > u16::MAX as usize {
            return Err(ChunkError::SignatureTooLong(header.signature.len()));
        }
        Ok(Self { id, ttl_ms, named: Some(header), payload })
    }

    pub fn id(&self) -> Xid {
        self.id
    }

    pub fn ttl_ms(&self) -> u32 {
        self.ttl_ms
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }

    pub fn into_payload(self) -> Vec<u8> {
        self.payload
    }

    pub fn named(&self) -> Option<&NamedHeader> {
        self.named.as_ref()
    }

    pub fn name(&self) -> Option<&str> {
        self.named.as_ref().map(|h| h.name.as_str())
    }

    pub fn key_ref(&self) -> Option<&DagAddress> {
        self.named.as_ref().map(|h| &h.key_ref)
    }

    pub fn fingerprint(&self) -> Option<&Fingerprint> {
        self.named.as_ref().map(|h| &h.fingerprint)
    }

    pub fn signature(&self) -> Option<&[u8]> {
        self.named.as_ref().map(|h| h.signature.as_slice())
    }
}

pub fn build_cid_chunk(payload: Vec<u8>, ttl_ms: u32, limits: &ChunkLimits) -> Result<Chunk, ChunkError> {
    limits.check_payload(payload.len())?;
    let id = compute_cid(&payload);
    Chunk::from_cid_parts(id, ttl_ms, payload)
}

/// Builds and signs a named chunk. `key_ref` must address the chunk holding
/// `key`'s public key, i.e. its intent is the CID of those key bytes.
pub fn build_ncid_chunk(
    name: &str,
    payload: Vec<u8>,
    ttl_ms: u32,
    key: &PublisherKey,
    key_ref: DagAddress,
    limits: &ChunkLimits,
) -> Result<Chunk, ChunkError> {
    limits.check_payload(payload.len())?;
    let key_cid = compute_cid(&key.public_key());
    if key_ref.intent() != key_cid {
        return Err(ChunkError::KeyRefMismatch { expected: key_cid, found: key_ref.intent() });
    }
    let fp = key.fingerprint();
    let id = compute_ncid(name, &fp)?;
    let signature = key.sign_named(name, &payload);
    Chunk::from_named_parts(
        id,
        ttl_ms,
        NamedHeader { name: name.to_string(), key_ref, fingerprint: fp, signature },
        payload,
    )
}

/// The CID chunk that publishes `key`'s public half.
pub fn build_key_chunk(key: &PublisherKey, ttl_ms: u32) -> Chunk {
    build_cid_chunk(key.public_key().to_vec(), ttl_ms, &ChunkLimits::default())
        .expect("a public key fits in any chunk")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cid_chunk_is_definitional() {
        let c = build_cid_chunk(b"abc".to_vec(), 500, &ChunkLimits::default()).unwrap();
        assert_eq!(c.id(), compute_cid(b"abc"));
        assert!(c.named().is_none());
        assert_eq!(c.ttl_ms(), 500);
    }

    #[test]
    fn payload_limit_is_enforced() {
        let limits = ChunkLimits { max_payload: 4 };
        assert!(build_cid_chunk(vec![0; 4], 1, &limits).is_ok());
        assert_eq!(
            build_cid_chunk(vec![0; 5], 1, &limits),
            Err(ChunkError::PayloadTooLarge { len: 5, max: 4 })
        );
    }

    #[test]
    fn named_chunk_requires_matching_key_ref() {
        let key = PublisherKey::from_secret([1; 32]);
        let other = PublisherKey::from_secret([2; 32]);
        let wrong = DagAddress::direct(compute_cid(&other.public_key()));
        let err = build_ncid_chunk("fb.com/cmu", b"x".to_vec(), 1, &key, wrong, &ChunkLimits::default());
        assert!(matches!(err, Err(ChunkError::KeyRefMismatch { .. })));

        let right = DagAddress::direct(compute_cid(&key.public_key()));
        let c = build_ncid_chunk("fb.com/cmu", b"x".to_vec(), 1, &key, right, &ChunkLimits::default()).unwrap();
        assert_eq!(c.id(), compute_ncid("fb.com/cmu", &key.fingerprint()).unwrap());
        assert_eq!(c.fingerprint(), Some(&key.fingerprint()));
        assert_eq!(c.name(), Some("fb.com/cmu"));
    }

    #[test]
    fn parts_constructors_enforce_field_presence() {
        let ncid = compute_ncid("n", &[0; 20]).unwrap();
        assert_eq!(Chunk::from_cid_parts(ncid, 1, vec![]), Err(ChunkError::WrongType(XidType::Ncid)));
        let header = NamedHeader {
            name: String::new(),
            key_ref: DagAddress::direct(compute_cid(b"k")),
            fingerprint: [0; 20],
            signature: vec![],
        };
        assert_eq!(Chunk::from_named_parts(ncid, 1, header, vec![]), Err(ChunkError::EmptyName));
    }
}

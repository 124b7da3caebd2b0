use thiserror::Error;

use super::chunk::Chunk;
use super::hash::{compute_cid, compute_ncid, fingerprint};
use super::keys::{parse_public_key, verify_named_signature};
use crate::addressing::{DagAddress, Xid, XidType};

/// Why a chunk failed verification. For named chunks the variant is the
/// first failing step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Error)]
pub enum Reject {
    #[error("hash-mismatch")]
    HashMismatch,
    #[error("key-unavailable")]
    KeyUnavailable,
    #[error("key-chunk-invalid")]
    KeyChunkInvalid,
    #[error("ncid-mismatch")]
    NcidMismatch,
    #[error("signature-invalid")]
    SignatureInvalid,
    #[error("wrong-type")]
    WrongType,
}

impl Reject {
    /// Stable lowercase reason code, as printed in reports.
    pub fn code(&self) -> &'static str {
        match self {
            Reject::HashMismatch => "hash-mismatch",
            Reject::KeyUnavailable => "key-unavailable",
            Reject::KeyChunkInvalid => "key-chunk-invalid",
            Reject::NcidMismatch => "ncid-mismatch",
            Reject::SignatureInvalid => "signature-invalid",
            Reject::WrongType => "wrong-type",
        }
    }
}

/// A CID chunk is valid iff its id is the hash of its payload.
pub fn verify_cid(chunk: &Chunk) -> Result<(), Reject> {
    if chunk.id().xtype() != XidType::Cid {
        return Err(Reject::WrongType);
    }
    if compute_cid(chunk.payload()) != chunk.id() {
        return Err(Reject::HashMismatch);
    }
    Ok(())
}

/// Two-step check of a named chunk against the key chunk its `key_ref`
/// points at:
///
/// 1. the key chunk is a valid CID chunk, is the one `key_ref` names, and
///    holds a well-formed public key;
/// 2. the chunk's nCID and fingerprint match `hash(name, fingerprint(key))`
///    (name ↔ publisher);
/// 3. the signature over `(name, payload)` verifies under that key
///    (name ↔ content).
pub fn verify_ncid(chunk: &Chunk, key_chunk: &Chunk) -> Result<(), Reject> {
    let header = match (chunk.id().xtype(), chunk.named()) {
        (XidType::Ncid, Some(h)) => h,
        _ => return Err(Reject::WrongType),
    };

    verify_cid(key_chunk).map_err(|_| Reject::KeyChunkInvalid)?;
    if key_chunk.id() != header.key_ref.intent() || parse_public_key(key_chunk.payload()).is_none() {
        return Err(Reject::KeyChunkInvalid);
    }

    let fp = fingerprint(key_chunk.payload());
    let expected = compute_ncid(&header.name, &fp).map_err(|_| Reject::NcidMismatch)?;
    if chunk.id() != expected || header.fingerprint != fp {
        return Err(Reject::NcidMismatch);
    }

    if !verify_named_signature(&header.name, chunk.payload(), &header.signature, key_chunk.payload()) {
        return Err(Reject::SignatureInvalid);
    }
    Ok(())
}

/// Where verification obtains a named chunk's key chunk.
pub trait KeySource {
    fn fetch_key(&mut self, key_ref: &DagAddress) -> Option<Chunk>;
}

impl<F> KeySource for F
where
    F: FnMut(&DagAddress) -> Option<Chunk>,
{
    fn fetch_key(&mut self, key_ref: &DagAddress) -> Option<Chunk> {
        self(key_ref)
    }
}

/// Verifies a named chunk, obtaining its key chunk with exactly one
/// `fetch_key` call. Returns the key chunk on success.
pub fn verify_ncid_with(chunk: &Chunk, keys: &mut dyn KeySource) -> Result<Chunk, Reject> {
    let key_ref = match (chunk.id().xtype(), chunk.key_ref()) {
        (XidType::Ncid, Some(r)) => r,
        _ => return Err(Reject::WrongType),
    };
    let key_chunk = keys.fetch_key(key_ref).ok_or(Reject::KeyUnavailable)?;
    verify_ncid(chunk, &key_chunk)?;
    Ok(key_chunk)
}

/// A chunk that passed verification. Content stores accept only these.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifiedChunk(Chunk);

impl VerifiedChunk {
    pub fn check_cid(chunk: Chunk) -> Result<Self, Reject> {
        verify_cid(&chunk)?;
        Ok(Self(chunk))
    }

    pub fn check_ncid(chunk: Chunk, key_chunk: &Chunk) -> Result<Self, Reject> {
        verify_ncid(&chunk, key_chunk)?;
        Ok(Self(chunk))
    }

    /// Verifies a chunk received for `requested`: the id must be the one
    /// asked for, then the CID or nCID checks apply. For named chunks the
    /// key chunk comes from `keys` and is returned alongside, verified.
    pub fn check_requested(
        requested: &Xid,
        chunk: Chunk,
        keys: &mut dyn KeySource,
    ) -> Result<(Self, Option<Self>), Reject> {
        match requested.xtype() {
            XidType::Cid => {
                if chunk.id() != *requested {
                    return Err(Reject::HashMismatch);
                }
                Ok((Self::check_cid(chunk)?, None))
            }
            XidType::Ncid => {
                if chunk.id() != *requested {
                    return Err(Reject::NcidMismatch);
                }
                let key = verify_ncid_with(&chunk, keys)?;
                Ok((Self(chunk), Some(Self(key))))
            }
            _ => Err(Reject::WrongType),
        }
    }

    /// Re-admits a chunk this process verified earlier and persisted itself.
    pub(crate) fn trusted(chunk: Chunk) -> Self {
        Self(chunk)
    }

    pub fn chunk(&self) -> &Chunk {
        &self.0
    }

    pub fn id(&self) -> Xid {
        self.0.id()
    }

    pub fn into_inner(self) -> Chunk {
        self.0
    }
}

impl AsRef<Chunk> for VerifiedChunk {
    fn as_ref(&self) -> &Chunk {
        &self.0
    }
}

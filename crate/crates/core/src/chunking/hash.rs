use sha2::{Digest, Sha256};

use super::ChunkError;
use crate::addressing::{Xid, XidType, XID_LEN};

pub type Fingerprint = [u8; XID_LEN];

/// Appends `field` with a 4-byte big-endian length prefix.
pub(crate) fn frame_into(out: &mut Vec<u8>, field: &[u8]) {
    out.extend_from_slice(&(field.len() as u32).to_be_bytes());
    out.extend_from_slice(field);
}

fn truncated(digest: &[u8]) -> [u8; XID_LEN] {
    let mut out = [0u8; XID_LEN];
    out.copy_from_slice(&digest[..XID_LEN]);
    out
}

/// First 20 bytes of SHA-256.
pub fn hash160(data: &[u8]) -> [u8; XID_LEN] {
    truncated(&Sha256::digest(data))
}

/// Content identifier: the truncated hash of the payload.
pub fn compute_cid(payload: &[u8]) -> Xid {
    Xid::new(XidType::Cid, hash160(payload))
}

/// Fingerprint of a publisher's canonical public-key bytes.
pub fn fingerprint(public_key: &[u8]) -> Fingerprint {
    hash160(public_key)
}

/// Named-content identifier binding a name to a publisher fingerprint.
pub fn compute_ncid(name: &str, fp: &Fingerprint) -> Result<Xid, ChunkError> {
    if name.is_empty() {
        return Err(ChunkError::EmptyName);
    }
    let mut hasher = Sha256::new();
    hasher.update((name.len() as u32).to_be_bytes());
    hasher.update(name.as_bytes());
    hasher.update(fp);
    Ok(Xid::new(XidType::Ncid, truncated(&hasher.finalize())))
}

/// Bytes covered by a named-content signature.
pub(crate) fn signed_message(name: &str, payload: &[u8]) -> Vec<u8> {
    let mut msg = Vec::with_capacity(4 + name.len() + payload.len());
    frame_into(&mut msg, name.as_bytes());
    msg.extend_from_slice(payload);
    msg
}

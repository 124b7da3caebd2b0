//! Chunks and their cryptography.
//!
//! A CID chunk certifies itself: its id is the truncated SHA-256 of the
//! payload. A named (nCID) chunk binds a human-readable name to a publisher
//! through `id = H(len(name) || name || fingerprint(publisher key))` and binds
//! the name to the payload through an Ed25519 signature. Verifying a named
//! chunk needs exactly one extra object: the publisher's key chunk.

mod chunk;
mod hash;
mod keys;
mod verify;
mod wire;

use thiserror::Error;

use crate::addressing::{Xid, XidType};

pub use chunk::{
    build_cid_chunk, build_key_chunk, build_ncid_chunk, Chunk, ChunkLimits, NamedHeader, DEFAULT_MAX_PAYLOAD,
    MAX_NAME_LEN,
};
pub use hash::{compute_cid, compute_ncid, fingerprint, hash160, Fingerprint};
pub use keys::{
    read_public_key_file, sign_named, verify_named_signature, KeyFileError, PublisherKey, PUBLIC_KEY_LEN,
    PUBLIC_KEY_MAGIC, SECRET_KEY_LEN, SECRET_KEY_MAGIC, SIGNATURE_LEN,
};
pub use verify::{verify_cid, verify_ncid, verify_ncid_with, KeySource, Reject, VerifiedChunk};
pub use wire::{decode_chunk, decode_chunk_with, encode_chunk, DecodeError, CHUNK_MAGIC, CHUNK_VERSION};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChunkError {
    #[error("name must not be empty")]
    EmptyName,
    #[error("name is {0} bytes, limit is {MAX_NAME_LEN}")]
    NameTooLong(usize),
    #[error("signature is {0} bytes, too long to encode")]
    SignatureTooLong(usize),
    #[error("payload is {len} bytes, limit is {max}")]
    PayloadTooLarge { len: usize, max: usize },
    #[error("identifier type {0} is not valid for this chunk kind")]
    WrongType(XidType),
    #[error("key reference names {found}, but the key chunk is {expected}")]
    KeyRefMismatch { expected: Xid, found: Xid },
    #[error("named chunk lacks key reference or fingerprint")]
    MissingNamedFields,
    #[error("content chunk carries named-chunk fields")]
    UnexpectedNamedFields,
}

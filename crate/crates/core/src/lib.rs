//! Content delivery over a multi-principal network.
//!
//! - [`addressing`]: typed identifiers and DAG addresses with fallbacks.
//! - [`urls`]: URL forms for DAG addresses and named content.
//! - [`chunking`]: chunk format, CID/nCID derivation, signing, verification.
//! - [`store`]: memory and disk stores, LRU eviction, placement, TTLs.
//! - [`netsim`]: discrete-event network, content transport, raw capture.
//! - [`xcached`]: the per-node cache daemon and its application handle.
//! - [`scenario`]: scripted multi-node runs with line-oriented reports.

pub mod addressing;
pub mod chunking;
pub mod netsim;
pub mod scenario;
pub mod store;
pub mod urls;
pub mod xcached;

pub use addressing::{DagAddress, Xid, XidType};
pub use chunking::{Chunk, PublisherKey, Reject, VerifiedChunk};
pub use urls::NcidUrl;

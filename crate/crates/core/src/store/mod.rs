//! Content stores, eviction, placement and TTL bookkeeping.

mod clock;
mod disk;
mod lru;
mod manager;
mod memory;

pub use clock::{Clock, ManualClock, SystemClock};
pub use disk::DiskStore;
pub use lru::Lru;
pub use manager::{EntryMeta, Placement, StorageManager};
pub use memory::MemoryStore;

use crate::addressing::Xid;
use crate::chunking::VerifiedChunk;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StoreKind {
    Memory,
    Disk,
    /// Anything else plugged in by the embedder, e.g. network-attached storage.
    Custom,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StoreError {
    #[error("chunk has ttl 0 and must not be cached")]
    NotCacheable,
    #[error("chunk of {0} bytes does not fit in any store")]
    TooLarge(usize),
    #[error("no store can take the chunk")]
    Full,
    #[error("not found")]
    NotFound,
    #[error("i/o error: {0}")]
    Io(String),
    #[error("corrupt store entry: {0}")]
    Corrupt(String),
}

/// What a backing store holds for one chunk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoredEntry {
    pub chunk: VerifiedChunk,
    pub expires_at: u64,
}

impl StoredEntry {
    /// Payload bytes, the unit of the optional byte budget.
    pub fn size(&self) -> usize {
        self.chunk.chunk().payload().len()
    }
}

/// A backing store. Stores only hold verified chunks and do no eviction on
/// their own; the manager decides what goes where and what leaves.
pub trait ContentStore: Send {
    fn kind(&self) -> StoreKind;
    fn capacity(&self) -> usize;
    fn byte_budget(&self) -> Option<usize>;
    fn len(&self) -> usize;
    fn bytes_used(&self) -> usize;
    fn contains(&self, id: &Xid) -> bool;
    fn store(&mut self, entry: StoredEntry) -> Result<(), StoreError>;
    fn get(&mut self, id: &Xid) -> Result<Option<StoredEntry>, StoreError>;
    fn remove(&mut self, id: &Xid) -> Result<Option<StoredEntry>, StoreError>;
    /// Every held id with its deadline.
    fn entries(&self) -> Vec<(Xid, u64)>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Tracks accesses for one store and picks victims.
pub trait EvictionPolicy: Send {
    fn on_store(&mut self, id: Xid);
    fn on_get(&mut self, id: &Xid);
    fn on_remove(&mut self, id: &Xid);
    /// Forgets and returns the next victim, or `None` when nothing is tracked.
    fn evict(&mut self) -> Option<Xid>;
}

/// Occupancy snapshot of one store, as seen by a placement policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StoreStatus {
    pub kind: StoreKind,
    pub capacity: usize,
    pub byte_budget: Option<usize>,
    pub len: usize,
    pub bytes_used: usize,
}

impl StoreStatus {
    pub fn has_room(&self, size: usize) -> bool {
        self.len < self.capacity && self.byte_budget.is_none_or(|b| self.bytes_used + size <= b)
    }

    /// Whether the chunk could fit once enough entries are evicted.
    pub fn could_fit(&self, size: usize) -> bool {
        self.capacity > 0 && self.byte_budget.is_none_or(|b| size <= b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlacementChoice {
    pub store_id: usize,
    pub evict_first: bool,
}

pub trait PlacementPolicy: Send {
    fn choose(&self, stores: &[StoreStatus], size: usize) -> Result<PlacementChoice, StoreError>;
}

/// Fill stores in the order they were added; when all are full, make room
/// in the last one that could hold the chunk.
#[derive(Debug, Clone, Copy, Default)]
pub struct MemoryThenDisk;

impl PlacementPolicy for MemoryThenDisk {
    fn choose(&self, stores: &[StoreStatus], size: usize) -> Result<PlacementChoice, StoreError> {
        if let Some(i) = stores.iter().position(|s| s.has_room(size)) {
            return Ok(PlacementChoice { store_id: i, evict_first: false });
        }
        match stores.iter().rposition(|s| s.could_fit(size)) {
            Some(i) => Ok(PlacementChoice { store_id: i, evict_first: true }),
            None if stores.iter().any(|s| s.capacity > 0) => Err(StoreError::TooLarge(size)),
            None => Err(StoreError::Full),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn status(capacity: usize, len: usize) -> StoreStatus {
        StoreStatus { kind: StoreKind::Memory, capacity, byte_budget: None, len, bytes_used: 0 }
    }

    #[test]
    fn placement_prefers_first_with_room() {
        let p = MemoryThenDisk;
        assert_eq!(p.choose(&[status(2, 1), status(5, 0)], 1).unwrap().store_id, 0);
        assert_eq!(p.choose(&[status(2, 2), status(5, 0)], 1).unwrap().store_id, 1);
        assert_eq!(p.choose(&[status(0, 0), status(5, 0)], 1).unwrap().store_id, 1);
        let full = p.choose(&[status(2, 2), status(5, 5)], 1).unwrap();
        assert_eq!(full, PlacementChoice { store_id: 1, evict_first: true });
    }

    #[test]
    fn placement_errors() {
        let p = MemoryThenDisk;
        assert_eq!(p.choose(&[status(0, 0)], 1), Err(StoreError::Full));
        let tiny = StoreStatus { byte_budget: Some(4), ..status(3, 0) };
        assert_eq!(p.choose(&[tiny], 5), Err(StoreError::TooLarge(5)));
    }
}

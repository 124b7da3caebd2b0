use std::collections::HashMap;
use std::sync::Arc;

use super::{
    Clock, ContentStore, EvictionPolicy, MemoryThenDisk, PlacementPolicy, StoreError, StoreKind, StoreStatus,
    StoredEntry,
};
use crate::addressing::Xid;
use crate::chunking::VerifiedChunk;

struct Slot {
    store: Box<dyn ContentStore>,
    policy: Box<dyn EvictionPolicy>,
}

/// Index entry for a cached chunk.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EntryMeta {
    pub store_id: usize,
    pub expires_at: u64,
    /// Logical access counter, bumped on store and get.
    pub last_access: u64,
    pub inserted: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Placement {
    pub store_id: usize,
    /// Ids pushed out to make room, in eviction order.
    pub evicted: Vec<Xid>,
}

/// Routes chunks to stores, keeps the id index and enforces TTLs.
pub struct StorageManager {
    slots: Vec<Slot>,
    placement: Box<dyn PlacementPolicy>,
    clock: Arc<dyn Clock>,
    index: HashMap<Xid, EntryMeta>,
    tick: u64,
}

impl std::fmt::Debug for StorageManager {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StorageManager")
            .field("stores", &self.slots.iter().map(|s| s.store.kind()).collect::<Vec<_>>())
            .field("entries", &self.index.len())
            .finish()
    }
}

impl StorageManager {
    pub fn new(clock: Arc<dyn Clock>) -> Self {
        Self { slots: Vec::new(), placement: Box::new(MemoryThenDisk), clock, index: HashMap::new(), tick: 0 }
    }

    pub fn with_placement(mut self, placement: Box<dyn PlacementPolicy>) -> Self {
        self.placement = placement;
        self
    }

    /// Appends a store and returns its id. Whatever the store already holds
    /// is indexed; entries that have expired are dropped.
    pub fn add_store(
        &mut self,
        mut store: Box<dyn ContentStore>,
        mut policy: Box<dyn EvictionPolicy>,
    ) -> Result<usize, StoreError> {
        let store_id = self.slots.len();
        let now = self.clock.now_ms();
        let mut existing = store.entries();
        existing.sort();
        for (id, expires_at) in existing {
            if expires_at <= now || self.index.contains_key(&id) {
                store.remove(&id)?;
                continue;
            }
            let tick = self.next_tick();
            policy.on_store(id);
            self.index.insert(id, EntryMeta { store_id, expires_at, last_access: tick, inserted: tick });
        }
        self.slots.push(Slot { store, policy });
        Ok(store_id)
    }

    fn next_tick(&mut self) -> u64 {
        self.tick += 1;
        self.tick
    }

    pub fn now(&self) -> u64 {
        self.clock.now_ms()
    }

    pub fn store_count(&self) -> usize {
        self.slots.len()
    }

    pub fn status(&self, store_id: usize) -> Option<StoreStatus> {
        self.slots.get(store_id).map(|s| status_of(s.store.as_ref()))
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn ids(&self) -> Vec<Xid> {
        let mut ids: Vec<Xid> = self.index.keys().copied().collect();
        ids.sort();
        ids
    }

    pub fn entry(&self, id: &Xid) -> Option<EntryMeta> {
        self.index.get(id).copied()
    }

    /// Whether `id` is held and unexpired.
    pub fn contains(&self, id: &Xid) -> bool {
        self.index.get(id).is_some_and(|m| self.clock.now_ms() < m.expires_at)
    }

    /// Places a verified chunk. Storing an id that is already held replaces
    /// the old copy and restarts its TTL.
    pub fn store(&mut self, chunk: VerifiedChunk) -> Result<Placement, StoreError> {
        let ttl = chunk.chunk().ttl_ms();
        if ttl == 0 {
            return Err(StoreError::NotCacheable);
        }
        let id = chunk.id();
        let entry = StoredEntry { chunk, expires_at: self.clock.now_ms().saturating_add(u64::from(ttl)) };
        let size = entry.size();

        let previous = self.index.get(&id).map(|m| m.inserted);
        if previous.is_some() {
            self.drop_entry(&id)?;
        }

        let statuses: Vec<StoreStatus> = self.slots.iter().map(|s| status_of(s.store.as_ref())).collect();
        let choice = self.placement.choose(&statuses, size)?;
        let store_id = choice.store_id;

        let mut evicted = Vec::new();
        if choice.evict_first {
            while !status_of(self.slots[store_id].store.as_ref()).has_room(size) {
                let Some(victim) = self.slots[store_id].policy.evict() else {
                    return Err(StoreError::Full);
                };
                self.slots[store_id].store.remove(&victim)?;
                self.index.remove(&victim);
                evicted.push(victim);
            }
        }

        let expires_at = entry.expires_at;
        let slot = &mut self.slots[store_id];
        slot.store.store(entry)?;
        slot.policy.on_store(id);
        let tick = self.next_tick();
        let inserted = previous.unwrap_or(tick);
        self.index.insert(id, EntryMeta { store_id, expires_at, last_access: tick, inserted });
        Ok(Placement { store_id, evicted })
    }

    /// Returns the chunk and records an access. Expired entries read as
    /// absent even while their bytes are still held.
    pub fn get(&mut self, id: &Xid) -> Result<VerifiedChunk, StoreError> {
        let chunk = self.read(id)?;
        let tick = self.next_tick();
        if let Some(meta) = self.index.get_mut(id) {
            meta.last_access = tick;
            self.slots[meta.store_id].policy.on_get(id);
        }
        Ok(chunk)
    }

    /// Like [`get`](Self::get) without counting as an access.
    pub fn peek(&mut self, id: &Xid) -> Result<VerifiedChunk, StoreError> {
        self.read(id)
    }

    fn read(&mut self, id: &Xid) -> Result<VerifiedChunk, StoreError> {
        let meta = *self.index.get(id).ok_or(StoreError::NotFound)?;
        if self.clock.now_ms() >= meta.expires_at {
            return Err(StoreError::NotFound);
        }
        match self.slots[meta.store_id].store.get(id)? {
            Some(entry) => Ok(entry.chunk),
            None => {
                self.index.remove(id);
                self.slots[meta.store_id].policy.on_remove(id);
                Err(StoreError::NotFound)
            }
        }
    }

    /// Removes `id` wherever it is. Returns whether anything was held.
    pub fn remove(&mut self, id: &Xid) -> Result<bool, StoreError> {
        if !self.index.contains_key(id) {
            return Ok(false);
        }
        self.drop_entry(id)?;
        Ok(true)
    }

    fn drop_entry(&mut self, id: &Xid) -> Result<(), StoreError> {
        if let Some(meta) = self.index.remove(id) {
            let slot = &mut self.slots[meta.store_id];
            slot.policy.on_remove(id);
            slot.store.remove(id)?;
        }
        Ok(())
    }

    /// Removes every entry with `expires_at <= now` and returns the ids,
    /// sorted.
    pub fn sweep(&mut self, now: u64) -> Result<Vec<Xid>, StoreError> {
        let mut expired: Vec<Xid> =
            self.index.iter().filter(|(_, m)| m.expires_at <= now).map(|(id, _)| *id).collect();
        expired.sort();
        for id in &expired {
            self.drop_entry(id)?;
        }
        Ok(expired)
    }

    /// Sweeps at the clock's current time.
    pub fn sweep_now(&mut self) -> Result<Vec<Xid>, StoreError> {
        self.sweep(self.clock.now_ms())
    }

    pub fn store_kind(&self, store_id: usize) -> Option<StoreKind> {
        self.slots.get(store_id).map(|s| s.store.kind())
    }
}

fn status_of(store: &dyn ContentStore) -> StoreStatus {
    StoreStatus {
        kind: store.kind(),
        capacity: store.capacity(),
        byte_budget: store.byte_budget(),
        len: store.len(),
        bytes_used: store.bytes_used(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chunking::{build_cid_chunk, ChunkLimits};
    use crate::store::{Lru, ManualClock, MemoryStore};

    fn chunk(data: &str, ttl: u32) -> VerifiedChunk {
        let c = build_cid_chunk(data.as_bytes().to_vec(), ttl, &ChunkLimits::default()).unwrap();
        VerifiedChunk::check_cid(c).unwrap()
    }

    fn manager(mem: usize, second: usize) -> (StorageManager, ManualClock) {
        let clock = ManualClock::new(0);
        let mut m = StorageManager::new(Arc::new(clock.clone()));
        m.add_store(Box::new(MemoryStore::new(mem)), Box::new(Lru::new())).unwrap();
        m.add_store(Box::new(MemoryStore::new(second)), Box::new(Lru::new())).unwrap();
        (m, clock)
    }

    #[test]
    fn ttl_zero_is_refused() {
        let (mut m, _) = manager(2, 2);
        assert_eq!(m.store(chunk("x", 0)), Err(StoreError::NotCacheable));
        assert!(m.is_empty());
    }

    #[test]
    fn restore_replaces_and_restarts_ttl() {
        let (mut m, clock) = manager(2, 2);
        let c = chunk("x", 100);
        m.store(c.clone()).unwrap();
        clock.set(50);
        m.store(c.clone()).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m.entry(&c.id()).unwrap().expires_at, 150);
        clock.set(120);
        assert_eq!(m.get(&c.id()).unwrap(), c);
    }

    #[test]
    fn get_tracks_access() {
        let (mut m, _) = manager(2, 2);
        let c = chunk("x", 100);
        m.store(c.clone()).unwrap();
        let before = m.entry(&c.id()).unwrap().last_access;
        m.get(&c.id()).unwrap();
        assert!(m.entry(&c.id()).unwrap().last_access > before);
        m.peek(&c.id()).unwrap();
        let after_peek = m.entry(&c.id()).unwrap().last_access;
        assert_eq!(after_peek, m.entry(&c.id()).unwrap().last_access);
    }

    #[test]
    fn byte_budget_evicts_until_fit() {
        let clock = ManualClock::new(0);
        let mut m = StorageManager::new(Arc::new(clock));
        m.add_store(Box::new(MemoryStore::new(10).with_byte_budget(6)), Box::new(Lru::new())).unwrap();
        let a = chunk("aaa", 10);
        let b = chunk("bbb", 10);
        let big = chunk("cccccc", 10);
        m.store(a.clone()).unwrap();
        m.store(b.clone()).unwrap();
        let p = m.store(big).unwrap();
        assert_eq!(p.evicted, vec![a.id(), b.id()]);
        assert_eq!(m.store(chunk("ddddddd", 10)), Err(StoreError::TooLarge(7)));
    }
}

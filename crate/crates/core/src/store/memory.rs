use std::collections::HashMap;

use super::{ContentStore, StoreError, StoreKind, StoredEntry};
use crate::addressing::Xid;

/// RAM-backed store.
#[derive(Debug)]
pub struct MemoryStore {
    capacity: usize,
    byte_budget: Option<usize>,
    bytes: usize,
    entries: HashMap<Xid, StoredEntry>,
}

impl MemoryStore {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, byte_budget: None, bytes: 0, entries: HashMap::new() }
    }

    pub fn with_byte_budget(mut self, budget: usize) -> Self {
        self.byte_budget = Some(budget);
        self
    }
}

impl ContentStore for MemoryStore {
    fn kind(&self) -> StoreKind {
        StoreKind::Memory
    }

    fn capacity(&self) -> usize {
        self.capacity
    }

    fn byte_budget(&self) -> Option<usize> {
        self.byte_budget
    }

    fn len(&self) -> usize {
        self.entries.len()
    }

    fn bytes_used(&self) -> usize {
        self.bytes
    }

    fn contains(&self, id: &Xid) -> bool {
        self.entries.contains_key(id)
    }

    fn store(&mut self, entry: StoredEntry) -> Result<(), StoreError> {
        self.bytes += entry.size();
        if let Some(old) = self.entries.insert(entry.chunk.id(), entry) {
            self.bytes -= old.size();
        }
        Ok(())
    }

    fn get(&mut self, id: &Xid) -> Result<Option<StoredEntry>, StoreError> {
        Ok(self.entries.get(id).cloned())
    }

    fn remove(&mut self, id: &Xid) -> Result<Option<StoredEntry>, StoreError> {
        let old = self.entries.remove(id);
        if let Some(e) = &old {
            self.bytes -= e.size();
        }
        Ok(old)
    }

    fn entries(&self) -> Vec<(Xid, u64)> {
        self.entries.iter().map(|(id, e)| (*id, e.expires_at)).collect()
    }
}

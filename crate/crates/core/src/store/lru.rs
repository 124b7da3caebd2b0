use std::collections::{BTreeMap, HashMap};

use super::EvictionPolicy;
use crate::addressing::Xid;

/// Least-recently-used eviction. Every store or get takes a fresh tick;
/// the victim is the smallest `(last access, insertion)` pair.
#[derive(Debug, Default)]
pub struct Lru {
    tick: u64,
    stamps: HashMap<Xid, (u64, u64)>,
    order: BTreeMap<(u64, u64), Xid>,
}

impl Lru {
    pub fn new() -> Self {
        Self::default()
    }

    fn next_tick(&mut self) -> u64 {
        self.tick += 1;
        self.tick
    }

    pub fn len(&self) -> usize {
        self.stamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stamps.is_empty()
    }
}

impl EvictionPolicy for Lru {
    fn on_store(&mut self, id: Xid) {
        let tick = self.next_tick();
        let inserted = match self.stamps.get(&id) {
            Some(&(last, ins)) => {
                self.order.remove(&(last, ins));
                ins
            }
            None => tick,
        };
        self.stamps.insert(id, (tick, inserted));
        self.order.insert((tick, inserted), id);
    }

    fn on_get(&mut self, id: &Xid) {
        if let Some(&(last, ins)) = self.stamps.get(id) {
            let tick = self.next_tick();
            self.order.remove(&(last, ins));
            self.order.insert((tick, ins), *id);
            self.stamps.insert(*id, (tick, ins));
        }
    }

    fn on_remove(&mut self, id: &Xid) {
        if let Some(key) = self.stamps.remove(id) {
            self.order.remove(&key);
        }
    }

    fn evict(&mut self) -> Option<Xid> {
        let (&key, &id) = self.order.iter().next()?;
        self.order.remove(&key);
        self.stamps.remove(&id);
        Some(id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::addressing::XidType;

    fn id(label: &str) -> Xid {
        Xid::symbolic(XidType::Cid, label).unwrap()
    }

    #[test]
    fn evicts_least_recent() {
        let mut lru = Lru::new();
        for l in ["A", "B", "C"] {
            lru.on_store(id(l));
        }
        lru.on_get(&id("A"));
        assert_eq!(lru.evict(), Some(id("B")));
        assert_eq!(lru.evict(), Some(id("C")));
        assert_eq!(lru.evict(), Some(id("A")));
        assert_eq!(lru.evict(), None);
    }

    #[test]
    fn single_entry_and_removal() {
        let mut lru = Lru::new();
        lru.on_store(id("A"));
        lru.on_store(id("B"));
        lru.on_remove(&id("A"));
        assert_eq!(lru.evict(), Some(id("B")));
        assert!(lru.is_empty());
    }

    #[test]
    fn get_of_unknown_is_ignored() {
        let mut lru = Lru::new();
        lru.on_get(&id("A"));
        assert_eq!(lru.evict(), None);
    }
}

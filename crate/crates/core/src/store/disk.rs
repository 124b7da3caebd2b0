//! One file per chunk, named `<hex id>.<type>`, in the wire layout, plus an
//! `index` file of `<type> <hex id> <expires_at>` lines. The index is
//! rebuilt on open from the chunk files that actually decode.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{ContentStore, StoreError, StoreKind, StoredEntry};
use crate::addressing::{Xid, XidType};
use crate::chunking::{decode_chunk, encode_chunk, VerifiedChunk};

const INDEX_FILE: &str = "index";

#[derive(Debug, Clone, Copy)]
struct DiskMeta {
    expires_at: u64,
    size: usize,
}

#[derive(Debug)]
pub struct DiskStore {
    dir: PathBuf,
    capacity: usize,
    byte_budget: Option<usize>,
    bytes: usize,
    index: BTreeMap<Xid, DiskMeta>,
}

fn io_err(path: &Path, e: std::io::Error) -> StoreError {
    StoreError::Io(format!("{}: {e}", path.display()))
}

fn file_name(id: &Xid) -> String {
    format!("{}.{}", id.hex(), id.xtype().scheme())
}

fn parse_file_name(name: &str) -> Option<Xid> {
    let (hex_part, scheme) = name.split_once('.')?;
    let xtype = XidType::from_scheme(scheme)?;
    let mut value = [0u8; 20];
    hex::decode_to_slice(hex_part, &mut value).ok()?;
    Some(Xid::new(xtype, value))
}

impl DiskStore {
    /// Opens (creating if needed) a store rooted at `dir`. Chunk files that
    /// fail to decode, or that the index does not know, are deleted.
    pub fn open(dir: impl Into<PathBuf>, capacity: usize) -> Result<Self, StoreError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;

        let mut expiries: BTreeMap<Xid, u64> = BTreeMap::new();
        let index_path = dir.join(INDEX_FILE);
        if let Ok(text) = fs::read_to_string(&index_path) {
            for line in text.lines() {
                let mut parts = line.split_whitespace();
                let (Some(scheme), Some(hex_id), Some(exp)) = (parts.next(), parts.next(), parts.next()) else {
                    continue;
                };
                if let (Some(id), Ok(exp)) = (parse_file_name(&format!("{hex_id}.{scheme}")), exp.parse()) {
                    expiries.insert(id, exp);
                }
            }
        }

        let mut index = BTreeMap::new();
        let mut bytes = 0;
        for entry in fs::read_dir(&dir).map_err(|e| io_err(&dir, e))? {
            let entry = entry.map_err(|e| io_err(&dir, e))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if name == INDEX_FILE || name.ends_with(".tmp") {
                continue;
            }
            let path = entry.path();
            let Some(id) = parse_file_name(&name) else {
                continue;
            };
            let decoded = fs::read(&path).ok().and_then(|b| decode_chunk(&b).ok());
            match (decoded, expiries.get(&id)) {
                (Some(chunk), Some(&expires_at)) if chunk.id() == id => {
                    bytes += chunk.payload().len();
                    index.insert(id, DiskMeta { expires_at, size: chunk.payload().len() });
                }
                _ => {
                    let _ = fs::remove_file(&path);
                }
            }
        }

        let store = Self { dir, capacity, byte_budget: None, bytes, index };
        store.write_index()?;
        Ok(store)
    }

    pub fn with_byte_budget(mut self, budget: usize) -> Self {
        self.byte_budget = Some(budget);
        self
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn write_index(&self) -> Result<(), StoreError> {
        let tmp = self.dir.join("index.tmp");
        let mut text = String::new();
        for (id, meta) in &self.index {
            text.push_str(&format!("{} {} {}\n", id.xtype().scheme(), id.hex(), meta.expires_at));
        }
        let mut f = fs::File::create(&tmp).map_err(|e| io_err(&tmp, e))?;
        f.write_all(text.as_bytes()).map_err(|e| io_err(&tmp, e))?;
        drop(f);
        let path = self.dir.join(INDEX_FILE);
        fs::rename(&tmp, &path).map_err(|e| io_err(&path, e))
    }
}

impl ContentStore for DiskStore {
    fn kind(&self) -> StoreKind {
        StoreKind::Disk
    }

    fn capacity(&self) -> usize {
        self.capacity
    }

    fn byte_budget(&self) -> Option<usize> {
        self.byte_budget
    }

    fn len(&self) -> usize {
        self.index.len()
    }

    fn bytes_used(&self) -> usize {
        self.bytes
    }

    fn contains(&self, id: &Xid) -> bool {
        self.index.contains_key(id)
    }

    fn store(&mut self, entry: StoredEntry) -> Result<(), StoreError> {
        let id = entry.chunk.id();
        let path = self.dir.join(file_name(&id));
        fs::write(&path, encode_chunk(entry.chunk.chunk())).map_err(|e| io_err(&path, e))?;
        let meta = DiskMeta { expires_at: entry.expires_at, size: entry.size() };
        self.bytes += meta.size;
        if let Some(old) = self.index.insert(id, meta) {
            self.bytes -= old.size;
        }
        self.write_index()
    }

    fn get(&mut self, id: &Xid) -> Result<Option<StoredEntry>, StoreError> {
        let Some(meta) = self.index.get(id).copied() else {
            return Ok(None);
        };
        let path = self.dir.join(file_name(id));
        let bytes = fs::read(&path).map_err(|e| io_err(&path, e))?;
        let chunk = decode_chunk(&bytes).map_err(|e| StoreError::Corrupt(format!("{}: {e}", path.display())))?;
        if chunk.id() != *id {
            return Err(StoreError::Corrupt(format!("{}: holds {}", path.display(), chunk.id())));
        }
        Ok(Some(StoredEntry { chunk: VerifiedChunk::trusted(chunk), expires_at: meta.expires_at }))
    }

    fn remove(&mut self, id: &Xid) -> Result<Option<StoredEntry>, StoreError> {
        let Some(entry) = self.get(id)? else {
            return Ok(None);
        };
        let path = self.dir.join(file_name(id));
        fs::remove_file(&path).map_err(|e| io_err(&path, e))?;
        if let Some(meta) = self.index.remove(id) {
            self.bytes -= meta.size;
        }
        self.write_index()?;
        Ok(Some(entry))
    }

    fn entries(&self) -> Vec<(Xid, u64)> {
        self.index.iter().map(|(id, m)| (*id, m.expires_at)).collect()
    }
}

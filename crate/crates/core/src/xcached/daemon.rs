use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, Weak};
use std::thread::JoinHandle;

use crossbeam_channel::{Receiver, Sender};

use super::handle::XcacheHandle;
use super::notify::{relock, FetchTicket, HandleState, NotifEvent, Notification, TicketSlot};
use super::policy::{policy_for, CacheDecision, CachePolicy};
use super::{FetchSource, Fetched, XcacheError, XcachedConfig};
use crate::addressing::{DagAddress, Xid, XidType};
use crate::chunking::{
    decode_chunk_with, encode_chunk, verify_cid, verify_ncid, Chunk, ChunkLimits, Reject, VerifiedChunk,
};
use crate::netsim::{
    fetch_bytes, lock, ContentRequest, Network, NodeAgent, NodeCtx, NodeId, Segment, SegmentFlags, SessionId,
    SharedNetwork, TransportError,
};
use crate::store::{DiskStore, Lru, MemoryStore, StorageManager, StoreError};

#[derive(Debug, Default)]
struct Counters {
    fast_path: AtomicU64,
    queued: AtomicU64,
    deduped: AtomicU64,
    remote_fetches: AtomicU64,
    sessions_served: AtomicU64,
    ingested: AtomicU64,
    key_fetches: AtomicU64,
    rejected: AtomicU64,
}

fn bump(c: &AtomicU64) {
    c.fetch_add(1, Ordering::Relaxed);
}

/// Point-in-time copy of a daemon's counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CounterSnapshot {
    /// Fetches answered from the local store by the calling thread.
    pub fast_path: u64,
    /// Fetches handed to the worker pool.
    pub queued: u64,
    /// Queued fetches that joined one already in flight.
    pub deduped: u64,
    /// Network sessions opened by workers for content.
    pub remote_fetches: u64,
    pub sessions_served: u64,
    /// Chunks cached from traffic this node forwarded.
    pub ingested: u64,
    pub key_fetches: u64,
    /// Chunks that failed verification.
    pub rejected: u64,
}

struct Job {
    dag: DagAddress,
    cert: Option<Chunk>,
}

/// A content session being reassembled from captured segments.
struct IngestBuf {
    intent: Xid,
    parts: BTreeMap<u32, Vec<u8>>,
    last_seen: u64,
}

pub(crate) struct Inner {
    net: SharedNetwork,
    node: NodeId,
    name: String,
    ad: Xid,
    hid: Xid,
    limits: ChunkLimits,
    // Lock order: network, store, handles, handle queues.
    store: Mutex<StorageManager>,
    policy: Box<dyn CachePolicy>,
    counters: Counters,
    handles: Mutex<Vec<Arc<HandleState>>>,
    next_handle: AtomicU64,
    inflight: Mutex<HashMap<Xid, Vec<Arc<TicketSlot>>>>,
    ingest: Mutex<BTreeMap<SessionId, IngestBuf>>,
    key_waits: Mutex<BTreeMap<SessionId, Chunk>>,
    jobs: Mutex<Option<Sender<Job>>>,
    queue_high_water: usize,
}

impl Inner {
    pub(crate) fn addr_of(&self, id: Xid) -> DagAddress {
        DagAddress::with_fallback(id, &[self.ad, self.hid]).unwrap_or_else(|_| DagAddress::direct(id))
    }

    pub(crate) fn limits(&self) -> &ChunkLimits {
        &self.limits
    }

    fn with_net<R>(&self, net: Option<&mut Network>, f: impl FnOnce(&mut Network) -> R) -> R {
        match net {
            Some(n) => f(n),
            None => f(&mut lock(&self.net)),
        }
    }

    fn notify(&self, event: NotifEvent, id: Xid) {
        let n = Notification { event, addr: self.addr_of(id) };
        let handles = relock(&self.handles).clone();
        for h in handles {
            h.post(n.clone());
        }
    }

    /// Stores a verified chunk and keeps the local routes in step with the
    /// store contents.
    pub(crate) fn admit(&self, net: Option<&mut Network>, chunk: VerifiedChunk, arrived: bool) -> Result<(), StoreError> {
        let id = chunk.id();
        let placement = relock(&self.store).store(chunk)?;
        self.with_net(net, |n| {
            for e in &placement.evicted {
                n.remove_local_route(self.node, e);
            }
            n.add_local_route(self.node, id);
        });
        for e in placement.evicted {
            self.notify(NotifEvent::ChunkEvicted, e);
        }
        if arrived {
            self.notify(NotifEvent::ChunkArrived, id);
        }
        Ok(())
    }

    /// Drops expired chunks, withdrawing their routes.
    pub(crate) fn sweep(&self, net: Option<&mut Network>) -> Vec<Xid> {
        let expired = match relock(&self.store).sweep_now() {
            Ok(ids) => ids,
            Err(e) => {
                log::warn!("{}: sweep failed: {e}", self.name);
                return Vec::new();
            }
        };
        if !expired.is_empty() {
            self.with_net(net, |n| {
                for id in &expired {
                    n.remove_local_route(self.node, id);
                }
            });
            for id in &expired {
                self.notify(NotifEvent::ChunkEvicted, *id);
            }
        }
        expired
    }

    /// Removes a chunk without notifying anyone. Returns whether it was held.
    pub(crate) fn discard(&self, id: &Xid) -> bool {
        let removed = relock(&self.store).remove(id).unwrap_or(false);
        if removed {
            lock(&self.net).remove_local_route(self.node, id);
        }
        removed
    }

    pub(crate) fn local_get(&self, id: &Xid) -> Option<VerifiedChunk> {
        relock(&self.store).get(id).ok()
    }

    fn local_peek(&self, id: &Xid) -> Option<VerifiedChunk> {
        relock(&self.store).peek(id).ok()
    }

    pub(crate) fn count_fast_path(&self) {
        bump(&self.counters.fast_path);
    }

    pub(crate) fn new_handle(self: &Arc<Self>) -> XcacheHandle {
        let id = self.next_handle.fetch_add(1, Ordering::Relaxed);
        let state = Arc::new(HandleState::new(id));
        relock(&self.handles).push(state.clone());
        XcacheHandle::new(self.clone(), state)
    }

    pub(crate) fn drop_handle(&self, state: &Arc<HandleState>) {
        state.kill();
        relock(&self.handles).retain(|h| !Arc::ptr_eq(h, state));
    }

    /// Key chunk for `key_ref`: the supplied certificate if it matches,
    /// then the local store, then the network.
    fn lookup_key(&self, key_ref: &DagAddress, cert: Option<&Chunk>) -> Option<Chunk> {
        let want = key_ref.intent();
        if let Some(c) = cert.filter(|c| c.id() == want) {
            return Some(c.clone());
        }
        if let Some(c) = self.local_peek(&want) {
            return Some(c.into_inner());
        }
        bump(&self.counters.key_fetches);
        let (_, bytes) = fetch_bytes(&self.net, self.node, key_ref).ok()?;
        decode_chunk_with(&bytes, &self.limits).ok()
    }

    /// Key chunk for `key_ref` from the local store or the network.
    pub(crate) fn key_for(&self, key_ref: &DagAddress) -> Option<Chunk> {
        self.lookup_key(key_ref, None)
    }

    pub(crate) fn enqueue(&self, dag: DagAddress, cert: Option<Chunk>) -> Result<FetchTicket, XcacheError> {
        let intent = dag.intent();
        let slot = Arc::new(TicketSlot::default());
        bump(&self.counters.queued);
        let mut inflight = relock(&self.inflight);
        if let Some(waiters) = inflight.get_mut(&intent) {
            waiters.push(slot.clone());
            bump(&self.counters.deduped);
            return Ok(FetchTicket { slot });
        }
        let tx = relock(&self.jobs).clone().ok_or(XcacheError::ShutDown)?;
        inflight.insert(intent, vec![slot.clone()]);
        drop(inflight);
        if tx.len() >= self.queue_high_water {
            log::warn!("{}: fetch queue at {} jobs", self.name, tx.len());
        }
        if tx.send(Job { dag, cert }).is_err() {
            relock(&self.inflight).remove(&intent);
            return Err(XcacheError::ShutDown);
        }
        Ok(FetchTicket { slot })
    }

    fn run_fetch(&self, job: &Job) -> Result<Fetched, XcacheError> {
        let intent = job.dag.intent();
        self.sweep(None);
        if let Some(chunk) = self.local_get(&intent) {
            return Ok(Fetched { chunk, source: FetchSource::Local });
        }
        bump(&self.counters.remote_fetches);
        let (session, bytes) = fetch_bytes(&self.net, self.node, &job.dag)?;
        let (stats, provider) = {
            let n = lock(&self.net);
            (n.session_stats(session).cloned(), n.client_peer(session).cloned())
        };
        let chunk = decode_chunk_with(&bytes, &self.limits).map_err(|e| {
            bump(&self.counters.rejected);
            XcacheError::Decode(e)
        })?;
        let mut keys = |key_ref: &DagAddress| self.lookup_key(key_ref, job.cert.as_ref());
        let (verified, key) = VerifiedChunk::check_requested(&intent, chunk, &mut keys).map_err(|r| {
            bump(&self.counters.rejected);
            XcacheError::Rejected(r)
        })?;
        let provider = provider.unwrap_or_else(|| job.dag.clone());
        if self.policy.decide(&intent, &provider) == CacheDecision::Cache {
            self.try_admit(None, verified.clone(), true);
            if let Some(k) = key {
                self.try_admit(None, k, false);
            }
        }
        let stats = stats.ok_or(XcacheError::Transport(TransportError::UnknownSession))?;
        Ok(Fetched { chunk: verified, source: FetchSource::Remote(stats) })
    }

    fn try_admit(&self, net: Option<&mut Network>, chunk: VerifiedChunk, arrived: bool) {
        let id = chunk.id();
        if let Err(e) = self.admit(net, chunk, arrived) {
            log::debug!("{}: not caching {id}: {e}", self.name);
        }
    }

    fn finish(&self, intent: &Xid, result: Result<Fetched, XcacheError>) {
        let waiters = relock(&self.inflight).remove(intent).unwrap_or_default();
        for w in waiters {
            w.complete(result.clone());
        }
    }

    fn idle_limit(net: &Network) -> u64 {
        2 * net.config().retry_cap as u64 * net.rto()
    }

    fn verify_ingest(&self, ctx: &mut NodeCtx<'_>, intent: Xid, chunk: Chunk) {
        match intent.xtype() {
            XidType::Cid => {
                let mut none = |_: &DagAddress| None;
                match VerifiedChunk::check_requested(&intent, chunk, &mut none) {
                    Ok((v, _)) => {
                        bump(&self.counters.ingested);
                        self.try_admit(Some(&mut *ctx.net), v, true);
                    }
                    Err(r) => self.reject_ingest(&intent, r),
                }
            }
            XidType::Ncid => {
                if chunk.id() != intent {
                    return self.reject_ingest(&intent, Reject::NcidMismatch);
                }
                let Some(key_ref) = chunk.key_ref().cloned() else {
                    return self.reject_ingest(&intent, Reject::WrongType);
                };
                if let Some(key) = self.local_peek(&key_ref.intent()) {
                    return self.finish_named_ingest(ctx, chunk, key.into_inner());
                }
                match ctx.open_session(&key_ref) {
                    Ok(session) => {
                        bump(&self.counters.key_fetches);
                        relock(&self.key_waits).insert(session, chunk);
                    }
                    Err(e) => log::debug!("{}: key for {intent} unreachable: {e}", self.name),
                }
            }
            _ => {}
        }
    }

    fn finish_named_ingest(&self, ctx: &mut NodeCtx<'_>, chunk: Chunk, key: Chunk) {
        let intent = chunk.id();
        let mut keys = |_: &DagAddress| Some(key.clone());
        match VerifiedChunk::check_requested(&intent, chunk, &mut keys) {
            Ok((v, k)) => {
                bump(&self.counters.ingested);
                self.try_admit(Some(&mut *ctx.net), v, true);
                if let Some(k) = k {
                    if !relock(&self.store).contains(&k.id()) {
                        self.try_admit(Some(&mut *ctx.net), k, false);
                    }
                }
            }
            Err(r) => self.reject_ingest(&intent, r),
        }
    }

    fn reject_ingest(&self, intent: &Xid, r: Reject) {
        bump(&self.counters.rejected);
        log::info!("{}: dropping captured {intent}: {}", self.name, r.code());
    }

    /// Re-verifies every stored chunk. Returns how many were checked.
    pub(crate) fn audit(&self) -> Result<usize, (Xid, Reject)> {
        let mut store = relock(&self.store);
        let ids = store.ids();
        for id in &ids {
            let Ok(chunk) = store.peek(id) else { continue };
            let chunk = chunk.into_inner();
            let res = match id.xtype() {
                XidType::Ncid => {
                    let key = chunk.key_ref().map(|r| r.intent()).and_then(|k| store.peek(&k).ok());
                    match key {
                        Some(k) => verify_ncid(&chunk, k.chunk()),
                        None if chunk.id() == *id => Ok(()),
                        None => Err(Reject::NcidMismatch),
                    }
                }
                _ => verify_cid(&chunk),
            };
            res.map_err(|r| (*id, r))?;
        }
        Ok(ids.len())
    }
}

impl NodeAgent for Inner {
    fn on_content_request(&self, ctx: &mut NodeCtx<'_>, request: &ContentRequest) {
        self.sweep(Some(&mut *ctx.net));
        match self.local_get(&request.intent) {
            Some(chunk) => {
                if ctx.accept(request.session) {
                    bump(&self.counters.sessions_served);
                    let _ = ctx.send_chunk(request.session, &encode_chunk(chunk.chunk()));
                }
            }
            None => ctx.abort(request.session),
        }
    }

    fn on_capture(&self, ctx: &mut NodeCtx<'_>, seg: &Segment) {
        let now = ctx.now();
        if seg.flags.contains(SegmentFlags::SYNACK) {
            let Some(intent) = seg.intent.filter(|i| i.xtype().is_content()) else { return };
            if relock(&self.store).contains(&intent) {
                return;
            }
            if self.policy.decide(&intent, &seg.src) == CacheDecision::DontCache {
                return;
            }
            let limit = Self::idle_limit(ctx.net);
            let mut ingest = relock(&self.ingest);
            ingest.retain(|_, b| now.saturating_sub(b.last_seen) <= limit);
            ingest.entry(seg.session).or_insert(IngestBuf { intent, parts: BTreeMap::new(), last_seen: now });
            return;
        }
        if seg.toward_server() {
            return;
        }
        let mut ingest = relock(&self.ingest);
        let Some(buf) = ingest.get_mut(&seg.session) else { return };
        buf.last_seen = now;
        if seg.flags.is_empty() {
            buf.parts.entry(seg.seq).or_insert_with(|| seg.payload.clone());
            return;
        }
        if !seg.flags.contains(SegmentFlags::FIN) {
            return;
        }
        let Some(buf) = ingest.remove(&seg.session) else { return };
        drop(ingest);
        let n = seg.seq;
        if buf.parts.len() as u64 != n as u64 || buf.parts.keys().any(|k| *k >= n) {
            log::debug!("{}: incomplete capture of {}", self.name, buf.intent);
            return;
        }
        let bytes: Vec<u8> = buf.parts.into_values().flatten().collect();
        match decode_chunk_with(&bytes, &self.limits) {
            Ok(chunk) => self.verify_ingest(ctx, buf.intent, chunk),
            Err(e) => {
                bump(&self.counters.rejected);
                log::info!("{}: undecodable capture of {}: {e}", self.name, buf.intent);
            }
        }
    }

    fn on_session_closed(&self, ctx: &mut NodeCtx<'_>, session: SessionId, outcome: Result<Vec<u8>, TransportError>) {
        let Some(chunk) = relock(&self.key_waits).remove(&session) else { return };
        let key = outcome.ok().and_then(|b| decode_chunk_with(&b, &self.limits).ok());
        match key {
            Some(key) => self.finish_named_ingest(ctx, chunk, key),
            None => self.reject_ingest(&chunk.id(), Reject::KeyUnavailable),
        }
    }
}

fn worker_loop(inner: Arc<Inner>, rx: Receiver<Job>) {
    while let Ok(job) = rx.recv() {
        let result = inner.run_fetch(&job);
        inner.finish(&job.dag.intent(), result);
    }
}

/// A running cache daemon attached to one simulated node.
pub struct Xcached {
    inner: Arc<Inner>,
    workers: Vec<JoinHandle<()>>,
}

impl Xcached {
    pub fn start(net: &SharedNetwork, node_name: &str, config: &XcachedConfig) -> Result<Self, XcacheError> {
        let (node, ad, hid, clock) = {
            let n = lock(net);
            let node = n.node_id(node_name)?;
            (node, n.ad(node), n.hid(node), n.clock())
        };
        let setup = |e: StoreError| XcacheError::Config(e.to_string());
        let mut mgr = StorageManager::new(Arc::new(clock));
        mgr.add_store(Box::new(MemoryStore::new(config.mem_capacity_chunks)), Box::new(Lru::new())).map_err(setup)?;
        if config.disk_capacity_chunks > 0 {
            let dir = config
                .disk_dir
                .clone()
                .ok_or_else(|| XcacheError::Config("disk_capacity_chunks needs disk_dir".into()))?;
            let disk = DiskStore::open(dir, config.disk_capacity_chunks).map_err(setup)?;
            mgr.add_store(Box::new(disk), Box::new(Lru::new())).map_err(setup)?;
        }
        let recovered = mgr.ids();
        let (tx, rx) = crossbeam_channel::unbounded();
        let inner = Arc::new(Inner {
            net: net.clone(),
            node,
            name: node_name.to_string(),
            ad,
            hid,
            limits: config.limits,
            store: Mutex::new(mgr),
            policy: policy_for(config.cache_policy),
            counters: Counters::default(),
            handles: Mutex::new(Vec::new()),
            next_handle: AtomicU64::new(1),
            inflight: Mutex::new(HashMap::new()),
            ingest: Mutex::new(BTreeMap::new()),
            key_waits: Mutex::new(BTreeMap::new()),
            jobs: Mutex::new(Some(tx)),
            queue_high_water: config.queue_high_water,
        });
        {
            let mut n = lock(net);
            for id in recovered {
                n.add_local_route(node, id);
            }
            let weak: Weak<dyn NodeAgent> = Arc::downgrade(&inner) as Weak<Inner>;
            n.set_agent(node, weak);
        }
        let mut workers = Vec::new();
        for i in 0..config.workers.max(1) {
            let (inner, rx) = (inner.clone(), rx.clone());
            let handle = std::thread::Builder::new()
                .name(format!("xcached-{node_name}-{i}"))
                .spawn(move || worker_loop(inner, rx))
                .map_err(|e| XcacheError::Config(e.to_string()))?;
            workers.push(handle);
        }
        Ok(Self { inner, workers })
    }

    /// Opens a new application handle.
    pub fn handle(&self) -> XcacheHandle {
        self.inner.new_handle()
    }

    pub fn node(&self) -> NodeId {
        self.inner.node
    }

    pub fn name(&self) -> &str {
        &self.inner.name
    }

    /// The address under which this node serves `id`.
    pub fn addr_of(&self, id: Xid) -> DagAddress {
        self.inner.addr_of(id)
    }

    pub fn counters(&self) -> CounterSnapshot {
        let c = &self.inner.counters;
        let get = |a: &AtomicU64| a.load(Ordering::Relaxed);
        CounterSnapshot {
            fast_path: get(&c.fast_path),
            queued: get(&c.queued),
            deduped: get(&c.deduped),
            remote_fetches: get(&c.remote_fetches),
            sessions_served: get(&c.sessions_served),
            ingested: get(&c.ingested),
            key_fetches: get(&c.key_fetches),
            rejected: get(&c.rejected),
        }
    }

    /// Evicts expired chunks now and returns their ids.
    pub fn sweep(&self) -> Vec<Xid> {
        self.inner.sweep(None)
    }

    pub fn contains(&self, id: &Xid) -> bool {
        relock(&self.inner.store).contains(id)
    }

    pub fn stored_ids(&self) -> Vec<Xid> {
        relock(&self.inner.store).ids()
    }

    pub fn expires_at(&self, id: &Xid) -> Option<u64> {
        relock(&self.inner.store).entry(id).map(|e| e.expires_at)
    }

    /// Reads a stored chunk without touching recency.
    pub fn peek(&self, id: &Xid) -> Option<VerifiedChunk> {
        self.inner.local_peek(id)
    }

    /// Re-verifies every stored chunk against its id.
    pub fn audit(&self) -> Result<usize, (Xid, Reject)> {
        self.inner.audit()
    }

    /// Stops the workers. Queued fetches still run; new ones fail.
    pub fn shutdown(&mut self) {
        relock(&self.inner.jobs).take();
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

impl Drop for Xcached {
    fn drop(&mut self) {
        self.shutdown();
    }
}

impl std::fmt::Debug for Xcached {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Xcached").field("node", &self.inner.name).field("workers", &self.workers.len()).finish()
    }
}

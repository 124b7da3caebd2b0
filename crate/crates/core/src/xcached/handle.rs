use std::sync::Arc;
use std::thread::JoinHandle;

use super::daemon::Inner;
use super::notify::{HandleState, NotifChannel, NotifEvent, Notification};
use super::{Fetch, FetchMode, FetchSource, Fetched, XcacheError};
use crate::addressing::DagAddress;
use crate::chunking::{
    build_cid_chunk, build_key_chunk, build_ncid_chunk, PublisherKey, VerifiedChunk,
};
use crate::urls::NcidUrl;

/// An application's session with its node's daemon. Clones share the same
/// handle; [`XcacheHandle::destroy`] invalidates all of them.
#[derive(Clone)]
pub struct XcacheHandle {
    inner: Arc<Inner>,
    state: Arc<HandleState>,
}

impl XcacheHandle {
    pub(crate) fn new(inner: Arc<Inner>, state: Arc<HandleState>) -> Self {
        Self { inner, state }
    }

    pub fn id(&self) -> u64 {
        self.state.id
    }

    pub fn is_live(&self) -> bool {
        self.state.is_live()
    }

    fn check(&self) -> Result<(), XcacheError> {
        if self.state.is_live() {
            Ok(())
        } else {
            Err(XcacheError::InvalidHandle)
        }
    }

    fn publish(&self, chunk: VerifiedChunk) -> Result<DagAddress, XcacheError> {
        let id = chunk.id();
        self.inner.sweep(None);
        self.inner.admit(None, chunk, false).map_err(|e| XcacheError::Publish(e.to_string()))?;
        Ok(self.inner.addr_of(id))
    }

    /// Publishes `data` as a content-addressed chunk served from this node.
    pub fn put_chunk(&self, data: Vec<u8>, ttl_ms: u32) -> Result<DagAddress, XcacheError> {
        self.check()?;
        let chunk = build_cid_chunk(data, ttl_ms, self.inner.limits()).map_err(XcacheError::Chunk)?;
        let verified = VerifiedChunk::check_cid(chunk).map_err(XcacheError::Rejected)?;
        self.publish(verified)
    }

    /// Publishes the public half of `key` as a CID chunk, for use as a
    /// certificate.
    pub fn put_key(&self, key: &PublisherKey, ttl_ms: u32) -> Result<DagAddress, XcacheError> {
        self.check()?;
        let verified = VerifiedChunk::check_cid(build_key_chunk(key, ttl_ms)).map_err(XcacheError::Rejected)?;
        self.publish(verified)
    }

    /// Publishes signed content under `name`, which for URL-addressed
    /// content is [`NcidUrl::canonical_name`]. The chunk is checked against
    /// the key chunk at `key_ref` before it is stored, so the key must be
    /// published first.
    pub fn put_named_content(
        &self,
        name: &str,
        data: Vec<u8>,
        ttl_ms: u32,
        key: &PublisherKey,
        key_ref: &DagAddress,
    ) -> Result<DagAddress, XcacheError> {
        self.check()?;
        let chunk = build_ncid_chunk(name, data, ttl_ms, key, key_ref.clone(), self.inner.limits())
            .map_err(XcacheError::Chunk)?;
        let key_chunk = self
            .inner
            .key_for(key_ref)
            .ok_or_else(|| XcacheError::Publish(format!("key chunk {} is not published", key_ref.intent())))?;
        let verified = VerifiedChunk::check_ncid(chunk, &key_chunk)
            .map_err(|r| XcacheError::Publish(format!("self-check failed: {}", r.code())))?;
        self.publish(verified)
    }

    /// Fetches the chunk named by `addr`'s intent. A local copy is returned
    /// at once; otherwise a worker fetches and verifies it.
    pub fn fetch_chunk(&self, addr: &DagAddress, mode: FetchMode) -> Result<Fetch, XcacheError> {
        self.fetch_with(addr, None, mode)
    }

    /// Blocking fetch.
    pub fn fetch(&self, addr: &DagAddress) -> Result<Fetched, XcacheError> {
        self.fetch_chunk(addr, FetchMode::Blocking)?.wait()
    }

    fn fetch_with(
        &self,
        addr: &DagAddress,
        cert: Option<crate::chunking::Chunk>,
        mode: FetchMode,
    ) -> Result<Fetch, XcacheError> {
        self.check()?;
        let intent = addr.intent();
        if !intent.xtype().is_content() {
            return Err(XcacheError::NotContent(intent));
        }
        self.inner.sweep(None);
        if let Some(chunk) = self.inner.local_get(&intent) {
            self.inner.count_fast_path();
            return Ok(Fetch::Done(Fetched { chunk, source: FetchSource::Local }));
        }
        let ticket = self.inner.enqueue(addr.clone(), cert)?;
        self.state.track(&ticket.slot);
        match mode {
            FetchMode::Blocking => Ok(Fetch::Done(ticket.wait()?)),
            FetchMode::NonBlocking => Ok(Fetch::Pending(ticket)),
        }
    }

    /// Resolves a named-content URL. The certificate comes from `cert` if
    /// given, else from the URL's `PubCert` locator. The content is looked
    /// up at the certificate's location.
    pub fn get_named_chunk(&self, url: &NcidUrl, cert: Option<&DagAddress>) -> Result<Fetched, XcacheError> {
        self.check()?;
        let cert_dag = match cert {
            Some(c) => c.clone(),
            None => url.pub_cert().ok_or(XcacheError::MissingCertificate)?.map_err(XcacheError::Url)?,
        };
        let cert_chunk = self.fetch(&cert_dag)?.chunk.into_inner();
        let ncid = url.ncid_for(cert_chunk.payload()).map_err(XcacheError::Chunk)?;
        let dag = DagAddress::with_fallback(ncid, &cert_dag.fallback_path()).unwrap_or_else(|_| DagAddress::direct(ncid));
        self.fetch_with(&dag, Some(cert_chunk), FetchMode::Blocking)?.wait()
    }

    /// Stops serving a chunk from this node. Removing something absent is
    /// not an error, and no notification is sent.
    pub fn destroy_chunk(&self, addr: &DagAddress) -> Result<(), XcacheError> {
        self.check()?;
        self.inner.discard(&addr.intent());
        Ok(())
    }

    pub fn register_notif(
        &self,
        event: NotifEvent,
        handler: impl Fn(&Notification) + Send + Sync + 'static,
    ) -> Result<(), XcacheError> {
        self.check()?;
        self.state.register(event, Arc::new(handler));
        Ok(())
    }

    /// Runs handlers for queued notifications on the calling thread.
    pub fn process_notif(&self) -> Result<usize, XcacheError> {
        self.check()?;
        Ok(self.state.process())
    }

    pub fn notif_channel(&self) -> Result<NotifChannel, XcacheError> {
        self.check()?;
        Ok(NotifChannel { state: self.state.clone() })
    }

    /// Spawns a thread that processes notifications until the handle dies.
    pub fn launch_notif_thread(&self) -> Result<JoinHandle<()>, XcacheError> {
        self.check()?;
        let state = self.state.clone();
        std::thread::Builder::new()
            .name(format!("xcache-notif-{}", state.id))
            .spawn(move || {
                while state.wait_ready(None) {
                    state.process();
                }
            })
            .map_err(|e| XcacheError::Config(e.to_string()))
    }

    /// Invalidates the handle: pending fetches fail with `Canceled` and
    /// further calls fail with `InvalidHandle`.
    pub fn destroy(&self) {
        self.inner.drop_handle(&self.state);
    }
}

impl std::fmt::Debug for XcacheHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("XcacheHandle").field("id", &self.state.id).field("live", &self.is_live()).finish()
    }
}

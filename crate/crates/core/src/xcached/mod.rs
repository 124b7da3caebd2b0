//! The cache daemon: one per node, serving, fetching, verifying and
//! opportunistically caching chunks, with an application-facing handle API.

mod config;
mod daemon;
mod handle;
mod notify;
mod policy;

pub use config::{ConfigError, XcachedConfig};
pub use daemon::{CounterSnapshot, Xcached};
pub use handle::XcacheHandle;
pub use notify::{FetchTicket, NotifChannel, NotifEvent, NotifHandler, Notification};
pub use policy::{policy_for, AlwaysCache, CacheDecision, CachePolicy, NeverCache};

use crate::addressing::Xid;
use crate::chunking::{ChunkError, DecodeError, Reject, VerifiedChunk};
use crate::netsim::{SessionStats, TransportError};
use crate::urls::UrlError;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum XcacheError {
    #[error("handle has been destroyed")]
    InvalidHandle,
    #[error("daemon is shut down")]
    ShutDown,
    #[error("{0} is not a content identifier")]
    NotContent(Xid),
    #[error("unroutable")]
    Unroutable,
    #[error("timed out")]
    Timeout,
    #[error("transport: {0}")]
    Transport(TransportError),
    #[error("verification failed: {0}")]
    Rejected(Reject),
    #[error("undecodable chunk: {0}")]
    Decode(DecodeError),
    #[error("publish failed: {0}")]
    Publish(String),
    #[error("no certificate address in the URL or arguments")]
    MissingCertificate,
    #[error("bad certificate address: {0}")]
    Url(UrlError),
    #[error("bad chunk parameters: {0}")]
    Chunk(ChunkError),
    #[error("canceled")]
    Canceled,
    #[error("daemon setup: {0}")]
    Config(String),
}

impl XcacheError {
    /// Whether the failure is about the bytes rather than reaching them.
    pub fn is_verification(&self) -> bool {
        matches!(self, XcacheError::Rejected(_) | XcacheError::Decode(_))
    }

    /// Short stable name, as used in reports.
    pub fn code(&self) -> &'static str {
        match self {
            XcacheError::InvalidHandle => "invalid-handle",
            XcacheError::ShutDown => "shut-down",
            XcacheError::NotContent(_) => "not-content",
            XcacheError::Unroutable => "unroutable",
            XcacheError::Timeout => "timeout",
            XcacheError::Transport(_) => "transport",
            XcacheError::Rejected(r) => r.code(),
            XcacheError::Decode(_) => "decode-error",
            XcacheError::Publish(_) => "publish-error",
            XcacheError::MissingCertificate => "missing-certificate",
            XcacheError::Url(_) => "bad-url",
            XcacheError::Chunk(_) => "bad-chunk",
            XcacheError::Canceled => "canceled",
            XcacheError::Config(_) => "config",
        }
    }
}

impl From<TransportError> for XcacheError {
    fn from(e: TransportError) -> Self {
        match e {
            TransportError::Unroutable => XcacheError::Unroutable,
            TransportError::ConnectTimeout | TransportError::Reset => XcacheError::Timeout,
            other => XcacheError::Transport(other),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FetchSource {
    /// Served from this node's store without touching the network.
    Local,
    Remote(SessionStats),
}

/// A verified chunk and where it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fetched {
    pub chunk: VerifiedChunk,
    pub source: FetchSource,
}

impl Fetched {
    pub fn payload(&self) -> &[u8] {
        self.chunk.chunk().payload()
    }

    pub fn stats(&self) -> Option<&SessionStats> {
        match &self.source {
            FetchSource::Local => None,
            FetchSource::Remote(s) => Some(s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FetchMode {
    Blocking,
    NonBlocking,
}

#[derive(Debug)]
pub enum Fetch {
    Done(Fetched),
    Pending(FetchTicket),
}

impl Fetch {
    pub fn wait(self) -> Result<Fetched, XcacheError> {
        match self {
            Fetch::Done(f) => Ok(f),
            Fetch::Pending(t) => t.wait(),
        }
    }
}

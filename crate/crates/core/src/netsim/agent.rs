use std::collections::BTreeMap;
use std::sync::{Arc, Mutex, Weak};

use super::engine::{ContentRequest, Network, NodeId, SessionStats, TransportError};
use super::segment::{Segment, SessionId};
use crate::addressing::{DagAddress, Xid};

/// Software attached to a node. Hooks run inside the simulation, one at a
/// time, after the event that triggered them; they must not lock the
/// shared network themselves.
pub trait NodeAgent: Send + Sync {
    /// A SYN reached this node's content server socket.
    fn on_content_request(&self, ctx: &mut NodeCtx<'_>, request: &ContentRequest) {
        let _ = (ctx, request);
    }

    /// Copy of a content segment this node forwarded.
    fn on_capture(&self, ctx: &mut NodeCtx<'_>, segment: &Segment) {
        let _ = (ctx, segment);
    }

    /// A session opened with [`NodeCtx::open_session`] finished.
    fn on_session_closed(&self, ctx: &mut NodeCtx<'_>, session: SessionId, outcome: Result<Vec<u8>, TransportError>) {
        let _ = (ctx, session, outcome);
    }
}

/// What a hook may do to the network, scoped to its own node.
pub struct NodeCtx<'a> {
    pub(crate) net: &'a mut Network,
    pub(crate) node: NodeId,
}

impl NodeCtx<'_> {
    pub fn node(&self) -> NodeId {
        self.node
    }

    pub fn name(&self) -> &str {
        self.net.node_name(self.node)
    }

    pub fn now(&self) -> u64 {
        self.net.now()
    }

    pub fn ad(&self) -> Xid {
        self.net.ad(self.node)
    }

    pub fn hid(&self) -> Xid {
        self.net.hid(self.node)
    }

    pub fn network(&self) -> &Network {
        self.net
    }

    /// Accepts a pending request; false if it is no longer pending.
    pub fn accept(&mut self, session: SessionId) -> bool {
        self.net.accept_session(self.node, session).is_some()
    }

    pub fn send_chunk(&mut self, session: SessionId, bytes: &[u8]) -> Result<(), TransportError> {
        self.net.send_chunk(session, bytes)
    }

    pub fn abort(&mut self, session: SessionId) {
        self.net.abort(self.node, session);
    }

    pub fn add_local_route(&mut self, xid: Xid) {
        self.net.add_local_route(self.node, xid);
    }

    pub fn remove_local_route(&mut self, xid: &Xid) {
        self.net.remove_local_route(self.node, xid);
    }

    pub fn is_local(&self, xid: &Xid) -> bool {
        self.net.routes(self.node).is_local(xid)
    }

    /// Opens a content session owned by this agent; the result arrives via
    /// [`NodeAgent::on_session_closed`].
    pub fn open_session(&mut self, dag: &DagAddress) -> Result<SessionId, TransportError> {
        self.net.open_for_agent(self.node, dag)
    }

    pub fn session_stats(&self, session: SessionId) -> Option<&SessionStats> {
        self.net.session_stats(session)
    }
}

/// Serves fixed byte strings for the identifiers it was given, whatever
/// they contain. Handy for fault injection.
#[derive(Debug, Default)]
pub struct StaticContentServer {
    content: Mutex<BTreeMap<Xid, Vec<u8>>>,
}

impl StaticContentServer {
    /// Creates a server and attaches it to `node`. The caller keeps the
    /// returned handle alive; the network only holds a weak reference.
    pub fn attach(net: &mut Network, node: NodeId) -> Arc<Self> {
        let server = Arc::new(Self::default());
        let weak: Weak<dyn NodeAgent> = Arc::downgrade(&server) as Weak<dyn NodeAgent>;
        net.set_agent(node, weak);
        server
    }

    /// Binds `xid` on `node` and serves `bytes` for it.
    pub fn serve(&self, net: &mut Network, node: NodeId, xid: Xid, bytes: Vec<u8>) {
        self.content.lock().unwrap_or_else(|e| e.into_inner()).insert(xid, bytes);
        net.add_local_route(node, xid);
    }
}

impl NodeAgent for StaticContentServer {
    fn on_content_request(&self, ctx: &mut NodeCtx<'_>, request: &ContentRequest) {
        let bytes = self.content.lock().unwrap_or_else(|e| e.into_inner()).get(&request.intent).cloned();
        if let Some(bytes) = bytes {
            if ctx.accept(request.session) {
                let _ = ctx.send_chunk(request.session, &bytes);
            }
        }
    }
}

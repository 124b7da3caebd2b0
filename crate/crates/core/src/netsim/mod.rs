//! Simulated network and the content transport running over it.
//!
//! A [`Network`] is a single-owner discrete-event engine. Application code
//! shares it as a [`SharedNetwork`] and uses the blocking helpers here,
//! which advance the engine one event at a time (releasing the lock between
//! events) until the awaited condition holds.

mod agent;
mod engine;
mod segment;
mod topology;

use std::sync::{Arc, Mutex, MutexGuard};

pub use agent::{NodeAgent, NodeCtx, StaticContentServer};
pub use engine::{
    node_xid, ClientStatus, ContentRequest, Network, NodeId, SessionStats, TransportConfig, TransportError,
};
pub use segment::{Segment, SegmentFlags, SessionId};
pub use topology::{CacheMode, LinkSpec, NodeSpec, RouteSpec, Topology, TopologyError};

use crate::addressing::{DagAddress, Xid};

pub type SharedNetwork = Arc<Mutex<Network>>;

pub fn shared(net: Network) -> SharedNetwork {
    Arc::new(Mutex::new(net))
}

/// Locks the network, recovering from a poisoned lock.
pub fn lock(net: &SharedNetwork) -> MutexGuard<'_, Network> {
    net.lock().unwrap_or_else(|e| e.into_inner())
}

/// Steps the engine until `check` yields a value.
pub fn drive_until<T>(
    net: &SharedNetwork,
    mut check: impl FnMut(&mut Network) -> Option<T>,
) -> Result<T, TransportError> {
    loop {
        let mut guard = lock(net);
        if let Some(v) = check(&mut guard) {
            return Ok(v);
        }
        if !guard.step_one() {
            return Err(TransportError::Stalled);
        }
    }
}

/// Opens a session to `dag`'s content and waits for the handshake.
pub fn connect_to_content(net: &SharedNetwork, node: NodeId, dag: &DagAddress) -> Result<SessionId, TransportError> {
    let session = lock(net).connect(node, dag)?;
    drive_until(net, |n| match n.client_status(session) {
        Some(ClientStatus::Connecting) => None,
        Some(ClientStatus::Failed(e)) => Some(Err(e.clone())),
        Some(_) => Some(Ok(session)),
        None => Some(Err(TransportError::UnknownSession)),
    })?
}

/// Waits for the whole chunk on an established session.
pub fn recv_chunk(net: &SharedNetwork, session: SessionId) -> Result<Vec<u8>, TransportError> {
    drive_until(net, |n| match n.client_status(session) {
        Some(ClientStatus::Connecting | ClientStatus::Established) => None,
        Some(ClientStatus::Failed(e)) => Some(Err(e.clone())),
        Some(ClientStatus::Complete(_)) => Some(n.take_received(session)),
        Some(ClientStatus::Closed) => Some(Err(TransportError::BadState)),
        None => Some(Err(TransportError::UnknownSession)),
    })?
}

/// Waits for a request on `node`'s server socket and accepts it.
pub fn accept_as_blocking(net: &SharedNetwork, node: NodeId) -> Result<(SessionId, Xid), TransportError> {
    drive_until(net, |n| n.accept_as(node))
}

/// Connects and receives in one go.
pub fn fetch_bytes(net: &SharedNetwork, node: NodeId, dag: &DagAddress) -> Result<(SessionId, Vec<u8>), TransportError> {
    let session = connect_to_content(net, node, dag)?;
    Ok((session, recv_chunk(net, session)?))
}

use std::collections::{BTreeMap, BTreeSet};

use super::dag::DagAddress;
use super::xid::{Xid, XidTypeSet};

/// Per-node forwarding state: at most one next hop per identifier, plus the
/// set of identifiers this node terminates.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RouteTable {
    entries: BTreeMap<Xid, String>,
    local: BTreeSet<Xid>,
}

impl RouteTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Installs or replaces the next hop for `xid`, returning the old one.
    pub fn add_route(&mut self, xid: Xid, next_hop: impl Into<String>) -> Option<String> {
        self.entries.insert(xid, next_hop.into())
    }

    pub fn remove_route(&mut self, xid: &Xid) -> Option<String> {
        self.entries.remove(xid)
    }

    pub fn next_hop(&self, xid: &Xid) -> Option<&str> {
        self.entries.get(xid).map(String::as_str)
    }

    pub fn add_local(&mut self, xid: Xid) -> bool {
        self.local.insert(xid)
    }

    pub fn remove_local(&mut self, xid: &Xid) -> bool {
        self.local.remove(xid)
    }

    pub fn is_local(&self, xid: &Xid) -> bool {
        self.local.contains(xid)
    }

    pub fn local(&self) -> impl Iterator<Item = &Xid> {
        self.local.iter()
    }

    pub fn routes(&self) -> impl Iterator<Item = (&Xid, &str)> {
        self.entries.iter().map(|(x, h)| (x, h.as_str()))
    }
}

/// Outcome of one forwarding decision.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Forwarding {
    /// The intent is terminated here; `position` is the intent node.
    DeliverLocal { position: usize },
    /// Send to `next_hop`; `position` is the last DAG node reached so far.
    Forward { next_hop: String, position: Option<usize> },
    Unroutable,
}

/// Picks the next step for a packet addressed to `dag` whose traversal has
/// reached `position` (`None` = still at the source).
///
/// Out-edges are tried in priority order. An edge is usable when its target
/// type is understood here and the target is either local or has a route.
/// A local target advances the position and resolution continues from it;
/// the first routable target is forwarded to. Unusable targets are skipped,
/// never looked through.
pub fn resolve_next(
    dag: &DagAddress,
    position: Option<usize>,
    understood: XidTypeSet,
    routes: &RouteTable,
) -> Forwarding {
    let mut at = position;
    'walk: loop {
        if at == Some(dag.intent_index()) {
            return Forwarding::DeliverLocal { position: dag.intent_index() };
        }
        for &target in dag.edges_from(at) {
            let xid = dag.node(target).xid;
            if !understood.contains(xid.xtype()) {
                continue;
            }
            if routes.is_local(&xid) {
                at = Some(target);
                continue 'walk;
            }
            if let Some(hop) = routes.next_hop(&xid) {
                return Forwarding::Forward { next_hop: hop.to_string(), position: at };
            }
        }
        return Forwarding::Unroutable;
    }
}

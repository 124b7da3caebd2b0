use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use crate::addressing::Xid;
use crate::netsim::{lock, shared, Network, SharedNetwork, StaticContentServer, Topology, TopologyError};
use crate::xcached::{XcacheError, Xcached, XcachedConfig};

/// Disk capacity per node when state is persisted and nothing else is set.
pub const DEFAULT_STATE_CHUNKS: usize = 1024;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WorldError {
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("daemon on {node}: {source}")]
    Daemon { node: String, source: XcacheError },
    #[error("unknown node {0:?}")]
    UnknownNode(String),
}

/// A simulated network with a daemon on every node.
pub struct World {
    net: SharedNetwork,
    daemons: BTreeMap<String, Xcached>,
    impostors: BTreeMap<String, Arc<StaticContentServer>>,
}

impl World {
    /// Starts one daemon per topology node. A node's `cache=` and `policy=`
    /// override `config`. With `state_dir`, each node keeps its chunks in
    /// `<state_dir>/<node>` only, so they survive across runs.
    pub fn build(topology: &Topology, config: &XcachedConfig, state_dir: Option<&Path>) -> Result<Self, WorldError> {
        let net = shared(Network::new(topology, config.transport)?);
        let mut daemons = BTreeMap::new();
        for spec in &topology.nodes {
            let mut cfg = config.clone();
            if let Some(p) = spec.policy {
                cfg.cache_policy = p;
            }
            match state_dir {
                Some(dir) => {
                    let fallback = match cfg.disk_capacity_chunks {
                        0 => DEFAULT_STATE_CHUNKS,
                        n => n,
                    };
                    cfg.disk_capacity_chunks = spec.cache.unwrap_or(fallback);
                    cfg.mem_capacity_chunks = 0;
                    cfg.disk_dir = Some(dir.join(&spec.name));
                }
                None => {
                    if let Some(c) = spec.cache {
                        cfg.mem_capacity_chunks = c;
                    }
                }
            }
            let daemon = Xcached::start(&net, &spec.name, &cfg)
                .map_err(|source| WorldError::Daemon { node: spec.name.clone(), source })?;
            daemons.insert(spec.name.clone(), daemon);
        }
        Ok(Self { net, daemons, impostors: BTreeMap::new() })
    }

    pub fn net(&self) -> &SharedNetwork {
        &self.net
    }

    pub fn daemon(&self, node: &str) -> Result<&Xcached, WorldError> {
        self.daemons.get(node).ok_or_else(|| WorldError::UnknownNode(node.to_string()))
    }

    pub fn daemons(&self) -> impl Iterator<Item = &Xcached> {
        self.daemons.values()
    }

    /// Replaces `node`'s daemon with a server that answers with whatever
    /// bytes it is given. Used to play an attacker.
    pub fn impostor(&mut self, node: &str) -> Result<Arc<StaticContentServer>, WorldError> {
        if let Some(s) = self.impostors.get(node) {
            return Ok(s.clone());
        }
        let id = lock(&self.net).node_id(node).map_err(|_| WorldError::UnknownNode(node.to_string()))?;
        if let Some(mut d) = self.daemons.remove(node) {
            let held = d.stored_ids();
            d.shutdown();
            let mut n = lock(&self.net);
            for x in &held {
                n.remove_local_route(id, x);
            }
        }
        let server = StaticContentServer::attach(&mut lock(&self.net), id);
        self.impostors.insert(node.to_string(), server.clone());
        Ok(server)
    }

    /// Moves simulated time forward, then sweeps every daemon. Returns the
    /// expired ids per node.
    pub fn advance(&self, ms: u64) -> Vec<(String, Xid)> {
        lock(&self.net).advance(ms);
        let mut out = Vec::new();
        for (name, d) in &self.daemons {
            out.extend(d.sweep().into_iter().map(|x| (name.clone(), x)));
        }
        out
    }

    /// Runs the network until nothing is in flight, so caches along the
    /// path finish taking in what they saw.
    pub fn settle(&self) {
        lock(&self.net).run_until_idle();
    }

    pub fn now(&self) -> u64 {
        lock(&self.net).now()
    }
}

impl std::fmt::Debug for World {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("World")
            .field("daemons", &self.daemons.keys().collect::<Vec<_>>())
            .field("impostors", &self.impostors.keys().collect::<Vec<_>>())
            .finish()
    }
}

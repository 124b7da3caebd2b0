use crate::addressing::{DagAddress, Xid};
use crate::netsim::CacheMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheDecision {
    Cache,
    DontCache,
}

/// Decides, once per session, whether content flowing through or into a
/// node is kept. `provider` is the source address from the SYNACK.
pub trait CachePolicy: Send + Sync {
    fn decide(&self, intent: &Xid, provider: &DagAddress) -> CacheDecision;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct AlwaysCache;

impl CachePolicy for AlwaysCache {
    fn decide(&self, intent: &Xid, _provider: &DagAddress) -> CacheDecision {
        if intent.xtype().is_content() {
            CacheDecision::Cache
        } else {
            CacheDecision::DontCache
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NeverCache;

impl CachePolicy for NeverCache {
    fn decide(&self, _intent: &Xid, _provider: &DagAddress) -> CacheDecision {
        CacheDecision::DontCache
    }
}

pub fn policy_for(mode: CacheMode) -> Box<dyn CachePolicy> {
    match mode {
        CacheMode::Always => Box::new(AlwaysCache),
        CacheMode::Never => Box::new(NeverCache),
    }
}

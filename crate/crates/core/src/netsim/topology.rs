//! Line-oriented topology files:
//!
//! ```text
//! # three nodes in a line
//! seed 7
//! node client cache=0
//! node router cache=16 policy=always
//! node publisher understands=AD,HID,CID,nCID
//! link client router delay=5 loss=0.0
//! link router publisher delay=5
//! route router CID-C publisher
//! ```

use std::collections::BTreeSet;
use std::fmt;

use crate::addressing::{Xid, XidType, XidTypeSet};

/// Per-node opportunistic caching switch carried by the topology.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CacheMode {
    Always,
    Never,
}

impl CacheMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "always" => Some(CacheMode::Always),
            "never" => Some(CacheMode::Never),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CacheMode::Always => "always",
            CacheMode::Never => "never",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    pub name: String,
    /// Memory-store capacity in chunks for the node's daemon.
    pub cache: Option<usize>,
    pub policy: Option<CacheMode>,
    pub understands: XidTypeSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkSpec {
    pub a: String,
    pub b: String,
    pub delay_ms: u64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouteSpec {
    pub node: String,
    pub xid: Xid,
    pub next_hop: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Topology {
    pub nodes: Vec<NodeSpec>,
    pub links: Vec<LinkSpec>,
    pub routes: Vec<RouteSpec>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("topology line {line}: {message}")]
pub struct TopologyError {
    pub line: usize,
    pub message: String,
}

fn valid_name(name: &str) -> bool {
    !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

fn parse_types(list: &str) -> Option<XidTypeSet> {
    let mut set = XidTypeSet::empty();
    for tag in list.split(',') {
        let t = XidType::ALL.into_iter().find(|t| t.tag().eq_ignore_ascii_case(tag))?;
        set.insert(t);
    }
    Some(set)
}

impl Topology {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Adds a node with default options.
    pub fn node(mut self, name: &str) -> Self {
        self.nodes.push(NodeSpec { name: name.to_string(), cache: None, policy: None, understands: XidTypeSet::all() });
        self
    }

    pub fn node_spec(mut self, spec: NodeSpec) -> Self {
        self.nodes.push(spec);
        self
    }

    pub fn link(mut self, a: &str, b: &str, delay_ms: u64, loss: f64) -> Self {
        self.links.push(LinkSpec { a: a.to_string(), b: b.to_string(), delay_ms, loss });
        self
    }

    pub fn route(mut self, node: &str, xid: Xid, next_hop: &str) -> Self {
        self.routes.push(RouteSpec { node: node.to_string(), xid, next_hop: next_hop.to_string() });
        self
    }

    pub fn find(&self, name: &str) -> Option<&NodeSpec> {
        self.nodes.iter().find(|n| n.name == name)
    }

    pub fn parse(text: &str) -> Result<Self, TopologyError> {
        let mut topo = Topology::new();
        for (i, raw) in text.lines().enumerate() {
            topo.parse_line(raw, i + 1)?;
        }
        topo.check().map_err(|message| TopologyError { line: 0, message })?;
        Ok(topo)
    }

    /// Applies one line; blank lines and `#` comments are ignored.
    pub fn parse_line(&mut self, raw: &str, line: usize) -> Result<(), TopologyError> {
        let err = |message: String| TopologyError { line, message };
        let text = raw.split('#').next().unwrap_or("").trim();
        let mut words = text.split_whitespace();
        let Some(keyword) = words.next() else {
            return Ok(());
        };
        let args: Vec<&str> = words.collect();
        match keyword {
            "seed" => {
                let [v] = args[..] else {
                    return Err(err("usage: seed <u64>".into()));
                };
                self.seed = v.parse().map_err(|_| err(format!("bad seed {v:?}")))?;
            }
            "node" => {
                let Some((&name, opts)) = args.split_first() else {
                    return Err(err("usage: node <name> [cache=N] [policy=always|never] [understands=T,..]".into()));
                };
                if !valid_name(name) {
                    return Err(err(format!("bad node name {name:?}")));
                }
                if self.find(name).is_some() {
                    return Err(err(format!("duplicate node {name}")));
                }
                let mut spec =
                    NodeSpec { name: name.to_string(), cache: None, policy: None, understands: XidTypeSet::all() };
                for opt in opts {
                    let (k, v) = opt.split_once('=').ok_or_else(|| err(format!("expected key=value, got {opt:?}")))?;
                    match k {
                        "cache" => spec.cache = Some(v.parse().map_err(|_| err(format!("bad cache {v:?}")))?),
                        "policy" => {
                            spec.policy = Some(CacheMode::parse(v).ok_or_else(|| err(format!("bad policy {v:?}")))?)
                        }
                        "understands" => {
                            spec.understands = parse_types(v).ok_or_else(|| err(format!("bad type list {v:?}")))?
                        }
                        _ => return Err(err(format!("unknown node option {k:?}"))),
                    }
                }
                self.nodes.push(spec);
            }
            "link" => {
                let [a, b, ref opts @ ..] = args[..] else {
                    return Err(err("usage: link <a> <b> [delay=ms] [loss=p]".into()));
                };
                let mut link = LinkSpec { a: a.to_string(), b: b.to_string(), delay_ms: 1, loss: 0.0 };
                for opt in opts {
                    let (k, v) = opt.split_once('=').ok_or_else(|| err(format!("expected key=value, got {opt:?}")))?;
                    match k {
                        "delay" => link.delay_ms = v.parse().map_err(|_| err(format!("bad delay {v:?}")))?,
                        "loss" => {
                            let p: f64 = v.parse().map_err(|_| err(format!("bad loss {v:?}")))?;
                            if !(0.0..=1.0).contains(&p) {
                                return Err(err(format!("loss {p} outside [0,1]")));
                            }
                            link.loss = p;
                        }
                        _ => return Err(err(format!("unknown link option {k:?}"))),
                    }
                }
                for end in [a, b] {
                    if self.find(end).is_none() {
                        return Err(err(format!("unknown node {end}")));
                    }
                }
                if a == b {
                    return Err(err("self link".into()));
                }
                self.links.push(link);
            }
            "route" => {
                let [node, xid, next] = args[..] else {
                    return Err(err("usage: route <node> <xid> <next>".into()));
                };
                let xid: Xid = xid.parse().map_err(|e| err(format!("{e}")))?;
                for n in [node, next] {
                    if self.find(n).is_none() {
                        return Err(err(format!("unknown node {n}")));
                    }
                }
                self.routes.push(RouteSpec { node: node.to_string(), xid, next_hop: next.to_string() });
            }
            other => return Err(err(format!("unknown directive {other:?}"))),
        }
        Ok(())
    }

    /// Structural checks shared by parsed and hand-built topologies.
    pub fn check(&self) -> Result<(), String> {
        let mut names = BTreeSet::new();
        for n in &self.nodes {
            if !valid_name(&n.name) {
                return Err(format!("bad node name {:?}", n.name));
            }
            if !names.insert(n.name.as_str()) {
                return Err(format!("duplicate node {}", n.name));
            }
        }
        let mut pairs = BTreeSet::new();
        for l in &self.links {
            for end in [&l.a, &l.b] {
                if !names.contains(end.as_str()) {
                    return Err(format!("link to unknown node {end}"));
                }
            }
            if l.a == l.b {
                return Err(format!("self link on {}", l.a));
            }
            if !(0.0..=1.0).contains(&l.loss) {
                return Err(format!("loss {} outside [0,1]", l.loss));
            }
            let key = if l.a < l.b { (&l.a, &l.b) } else { (&l.b, &l.a) };
            if !pairs.insert(key) {
                return Err(format!("duplicate link {} {}", l.a, l.b));
            }
        }
        for r in &self.routes {
            for n in [&r.node, &r.next_hop] {
                if !names.contains(n.as_str()) {
                    return Err(format!("route names unknown node {n}"));
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "seed {}", self.seed)?;
        for n in &self.nodes {
            write!(f, "node {}", n.name)?;
            if let Some(c) = n.cache {
                write!(f, " cache={c}")?;
            }
            if let Some(p) = n.policy {
                write!(f, " policy={}", p.as_str())?;
            }
            if n.understands != XidTypeSet::all() {
                let tags: Vec<&str> = n.understands.iter().map(XidType::tag).collect();
                write!(f, " understands={}", tags.join(","))?;
            }
            writeln!(f)?;
        }
        for l in &self.links {
            writeln!(f, "link {} {} delay={} loss={}", l.a, l.b, l.delay_ms, l.loss)?;
        }
        for r in &self.routes {
            writeln!(f, "route {} {} {}", r.node, r.xid, r.next_hop)?;
        }
        Ok(())
    }
}

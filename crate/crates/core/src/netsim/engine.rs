use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};
use std::sync::{Arc, Weak};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::agent::{NodeAgent, NodeCtx};
use super::segment::{Segment, SegmentFlags, SessionId};
use super::topology::{Topology, TopologyError};
use crate::addressing::{resolve_next, DagAddress, Forwarding, RouteTable, Xid, XidType, XidTypeSet};
use crate::chunking::hash160;
use crate::store::ManualClock;

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransportConfig {
    /// Payload bytes per data segment.
    pub segment_size: usize,
    /// Go-Back-N window, in segments.
    pub window: u32,
    /// Retransmit timeout as a multiple of the longest one-way path delay.
    pub rto_multiplier: u64,
    /// Consecutive timeouts tolerated before a session is reset.
    pub retry_cap: u32,
}

impl Default for TransportConfig {
    fn default() -> Self {
        Self { segment_size: 1024, window: 8, rto_multiplier: 4, retry_cap: 16 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransportError {
    #[error("no route to the requested content")]
    Unroutable,
    #[error("handshake timed out")]
    ConnectTimeout,
    #[error("session reset after repeated timeouts")]
    Reset,
    #[error("simulation ran out of events")]
    Stalled,
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("unknown session")]
    UnknownSession,
    #[error("{0} is not a content identifier")]
    NotContent(Xid),
    #[error("session is not in a state that allows this")]
    BadState,
}

/// Client-side view of a session.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClientStatus {
    Connecting,
    Established,
    /// All bytes received and the FIN acknowledged.
    Complete(Vec<u8>),
    /// Complete, and the bytes have been handed to the owner.
    Closed,
    Failed(TransportError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionStats {
    pub client: String,
    pub intent: Xid,
    /// Node whose server socket accepted the session.
    pub provider: Option<String>,
    /// Links crossed by the accepted SYN.
    pub hops: Option<u32>,
    pub data_segments: u32,
    pub segments_sent: u32,
    pub retransmits: u32,
}

/// A SYN waiting at a node's content server socket.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContentRequest {
    pub session: SessionId,
    pub intent: Xid,
    pub hops: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Owner {
    Api,
    Agent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Client,
    Server,
}

#[derive(Debug)]
struct ClientEnd {
    node: NodeId,
    owner: Owner,
    src: DagAddress,
    peer: Option<DagAddress>,
    syn: Segment,
    status: ClientStatus,
    retries: u32,
    idle: u32,
    generation: u64,
    expected: u32,
    buf: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    SynAckSent,
    Open,
    Sending,
    FinSent,
    Closed,
    Failed,
}

#[derive(Debug)]
struct ServerEnd {
    node: NodeId,
    intent: Xid,
    src: DagAddress,
    peer: DagAddress,
    phase: Phase,
    data: Option<Vec<Vec<u8>>>,
    base: u32,
    next: u32,
    retries: u32,
    generation: u64,
}

#[derive(Debug)]
struct Session {
    client: ClientEnd,
    server: Option<ServerEnd>,
    stats: SessionStats,
}

#[derive(Debug)]
enum EventKind {
    Arrive { node: NodeId, segment: Segment },
    Timer { session: SessionId, role: Role, generation: u64 },
    Unreachable { session: SessionId },
}

#[derive(Debug)]
struct Event {
    time: u64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.seq) == (other.time, other.seq)
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // reversed: BinaryHeap pops the earliest (time, seq) first
    fn cmp(&self, other: &Self) -> Ordering {
        (other.time, other.seq).cmp(&(self.time, self.seq))
    }
}

pub(crate) enum AgentCall {
    Request(NodeId, ContentRequest),
    Capture(NodeId, Segment),
    Closed(NodeId, SessionId, Result<Vec<u8>, TransportError>),
}

struct Node {
    name: String,
    ad: Xid,
    hid: Xid,
    routes: RouteTable,
    understood: XidTypeSet,
    agent: Option<Weak<dyn NodeAgent>>,
    pending: VecDeque<ContentRequest>,
    peers: BTreeMap<SessionId, DagAddress>,
    accepted: u64,
}

#[derive(Debug, Clone, Copy)]
struct Link {
    to: NodeId,
    delay: u64,
    loss: f64,
}

/// Identifier for a node name: the symbolic form when the name fits,
/// otherwise a hash of it.
pub fn node_xid(xtype: XidType, name: &str) -> Xid {
    Xid::symbolic(xtype, name).unwrap_or_else(|_| {
        let mut tagged = xtype.tag().as_bytes().to_vec();
        tagged.push(b':');
        tagged.extend_from_slice(name.as_bytes());
        Xid::from_digest(xtype, &hash160(&tagged))
    })
}

/// Discrete-event simulation of nodes, links and content sessions.
pub struct Network {
    config: TransportConfig,
    now: u64,
    seq: u64,
    queue: BinaryHeap<Event>,
    rng: ChaCha8Rng,
    clock: ManualClock,
    nodes: Vec<Node>,
    by_name: BTreeMap<String, NodeId>,
    adj: Vec<Vec<Link>>,
    dist: Vec<Vec<Option<u64>>>,
    rto: u64,
    sessions: BTreeMap<SessionId, Session>,
    calls: VecDeque<AgentCall>,
    draining: bool,
    trace: Vec<String>,
    events: u64,
}

impl std::fmt::Debug for Network {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Network")
            .field("now", &self.now)
            .field("nodes", &self.by_name.keys().collect::<Vec<_>>())
            .field("queued", &self.queue.len())
            .finish()
    }
}

impl Network {
    /// Builds the network, seeding its RNG from the topology. Every node
    /// terminates its own AD and HID and gets shortest-delay routes to every
    /// other node's AD and HID; explicit `route` lines are applied on top.
    pub fn new(topology: &Topology, config: TransportConfig) -> Result<Self, TopologyError> {
        topology.check().map_err(|message| TopologyError { line: 0, message })?;
        let n = topology.nodes.len();
        let by_name: BTreeMap<String, NodeId> =
            topology.nodes.iter().enumerate().map(|(i, s)| (s.name.clone(), i)).collect();

        let mut adj = vec![Vec::new(); n];
        for l in &topology.links {
            let (a, b) = (by_name[&l.a], by_name[&l.b]);
            adj[a].push(Link { to: b, delay: l.delay_ms, loss: l.loss });
            adj[b].push(Link { to: a, delay: l.delay_ms, loss: l.loss });
        }

        let mut dist = vec![vec![None; n]; n];
        for (i, row) in dist.iter_mut().enumerate() {
            row[i] = Some(0);
            for l in &adj[i] {
                row[l.to] = Some(row[l.to].map_or(l.delay, |d: u64| d.min(l.delay)));
            }
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    if let (Some(a), Some(b)) = (dist[i][k], dist[k][j]) {
                        if dist[i][j].is_none_or(|d| a + b < d) {
                            dist[i][j] = Some(a + b);
                        }
                    }
                }
            }
        }
        let longest = dist.iter().flatten().flatten().copied().max().unwrap_or(0);
        let rto = (config.rto_multiplier * longest).max(1);

        let mut nodes: Vec<Node> = topology
            .nodes
            .iter()
            .map(|s| {
                let ad = node_xid(XidType::Ad, &s.name);
                let hid = node_xid(XidType::Hid, &s.name);
                let mut routes = RouteTable::new();
                routes.add_local(ad);
                routes.add_local(hid);
                Node {
                    name: s.name.clone(),
                    ad,
                    hid,
                    routes,
                    understood: s.understands,
                    agent: None,
                    pending: VecDeque::new(),
                    peers: BTreeMap::new(),
                    accepted: 0,
                }
            })
            .collect();

        for s in 0..n {
            let mut neighbors: Vec<Link> = adj[s].clone();
            neighbors.sort_by(|a, b| nodes[a.to].name.cmp(&nodes[b.to].name));
            for d in 0..n {
                if d == s {
                    continue;
                }
                let best = neighbors
                    .iter()
                    .filter_map(|l| dist[l.to][d].map(|rest| (l.delay + rest, l.to)))
                    .min_by_key(|(cost, _)| *cost);
                if let Some((_, hop)) = best {
                    let hop_name = nodes[hop].name.clone();
                    let (ad, hid) = (nodes[d].ad, nodes[d].hid);
                    nodes[s].routes.add_route(ad, hop_name.clone());
                    nodes[s].routes.add_route(hid, hop_name);
                }
            }
        }
        for r in &topology.routes {
            nodes[by_name[&r.node]].routes.add_route(r.xid, r.next_hop.clone());
        }

        Ok(Self {
            config,
            now: 0,
            seq: 0,
            queue: BinaryHeap::new(),
            rng: ChaCha8Rng::seed_from_u64(topology.seed),
            clock: ManualClock::new(0),
            nodes,
            by_name,
            adj,
            dist,
            rto,
            sessions: BTreeMap::new(),
            calls: VecDeque::new(),
            draining: false,
            trace: Vec::new(),
            events: 0,
        })
    }

    pub fn config(&self) -> &TransportConfig {
        &self.config
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    /// A clock that follows simulated time.
    pub fn clock(&self) -> ManualClock {
        self.clock.clone()
    }

    pub fn rto(&self) -> u64 {
        self.rto
    }

    pub fn trace(&self) -> &[String] {
        &self.trace
    }

    /// Events processed so far.
    pub fn event_count(&self) -> u64 {
        self.events
    }

    pub fn is_idle(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn node_id(&self, name: &str) -> Result<NodeId, TransportError> {
        self.by_name.get(name).copied().ok_or_else(|| TransportError::UnknownNode(name.to_string()))
    }

    pub fn node_name(&self, node: NodeId) -> &str {
        &self.nodes[node].name
    }

    pub fn node_names(&self) -> impl Iterator<Item = &str> {
        self.nodes.iter().map(|n| n.name.as_str())
    }

    pub fn ad(&self, node: NodeId) -> Xid {
        self.nodes[node].ad
    }

    pub fn hid(&self, node: NodeId) -> Xid {
        self.nodes[node].hid
    }

    pub fn routes(&self, node: NodeId) -> &RouteTable {
        &self.nodes[node].routes
    }

    pub fn add_route(&mut self, node: NodeId, xid: Xid, next_hop: &str) {
        self.nodes[node].routes.add_route(xid, next_hop);
    }

    pub fn remove_route(&mut self, node: NodeId, xid: &Xid) {
        self.nodes[node].routes.remove_route(xid);
    }

    pub fn add_local_route(&mut self, node: NodeId, xid: Xid) {
        self.nodes[node].routes.add_local(xid);
    }

    pub fn remove_local_route(&mut self, node: NodeId, xid: &Xid) {
        self.nodes[node].routes.remove_local(xid);
    }

    /// Content identifiers this node's server socket is bound to.
    pub fn bound_content(&self, node: NodeId) -> Vec<Xid> {
        self.nodes[node].routes.local().filter(|x| x.xtype().is_content()).copied().collect()
    }

    /// Attaches the agent whose hooks run for events at `node`.
    pub fn set_agent(&mut self, node: NodeId, agent: Weak<dyn NodeAgent>) {
        self.nodes[node].agent = Some(agent);
    }

    pub fn pending_requests(&self, node: NodeId) -> Vec<ContentRequest> {
        self.nodes[node].pending.iter().cloned().collect()
    }

    /// Sessions accepted by the node's server socket so far.
    pub fn accepted_sessions(&self, node: NodeId) -> u64 {
        self.nodes[node].accepted
    }

    pub fn session_stats(&self, session: SessionId) -> Option<&SessionStats> {
        self.sessions.get(&session).map(|s| &s.stats)
    }

    pub fn client_status(&self, session: SessionId) -> Option<&ClientStatus> {
        self.sessions.get(&session).map(|s| &s.client.status)
    }

    /// The provider address a client learned from the SYNACK.
    pub fn client_peer(&self, session: SessionId) -> Option<&DagAddress> {
        self.sessions.get(&session).and_then(|s| s.client.peer.as_ref())
    }

    /// Shortest one-way delay between two nodes, if connected.
    pub fn path_delay(&self, a: NodeId, b: NodeId) -> Option<u64> {
        self.dist[a][b]
    }

    fn schedule(&mut self, time: u64, kind: EventKind) {
        self.seq += 1;
        self.queue.push(Event { time, seq: self.seq, kind });
    }

    fn log(&mut self, line: String) {
        log::trace!("{line}");
        self.trace.push(line);
    }

    fn log_segment(&mut self, what: &str, at: NodeId, seg: &Segment) {
        let line = format!(
            "t={} {} node={} session={} flags={} seq={} hops={} len={}",
            self.now,
            what,
            self.nodes[at].name,
            seg.session,
            seg.flags,
            seg.seq,
            seg.hops,
            seg.payload.len()
        );
        self.log(line);
    }

    /// Processes the earliest event. Returns false when none is queued.
    pub fn step_one(&mut self) -> bool {
        let Some(ev) = self.queue.pop() else {
            return false;
        };
        self.now = ev.time;
        self.clock.set(self.now);
        self.events += 1;
        match ev.kind {
            EventKind::Arrive { node, segment } => self.route_segment(node, segment, false),
            EventKind::Timer { session, role, generation } => self.on_timer(session, role, generation),
            EventKind::Unreachable { session } => {
                if let Some(s) = self.sessions.get(&session) {
                    if s.client.status == ClientStatus::Connecting {
                        let line = format!("t={} unreachable session={session}", self.now);
                        self.log(line);
                        self.fail_client(session, TransportError::Unroutable);
                    }
                }
            }
        }
        self.drain_calls();
        true
    }

    /// Runs every event due up to `now + ms`, then moves the clock there.
    pub fn advance(&mut self, ms: u64) {
        let target = self.now.saturating_add(ms);
        while self.queue.peek().is_some_and(|e| e.time <= target) {
            self.step_one();
        }
        self.now = target;
        self.clock.set(target);
    }

    /// Steps until `done` holds. Returns false if the queue empties first.
    pub fn step_until(&mut self, mut done: impl FnMut(&Network) -> bool) -> bool {
        loop {
            if done(self) {
                return true;
            }
            if !self.step_one() {
                return false;
            }
        }
    }

    pub fn run_until_idle(&mut self) {
        while self.step_one() {}
    }

    fn drain_calls(&mut self) {
        if self.draining {
            return;
        }
        self.draining = true;
        while let Some(call) = self.calls.pop_front() {
            let node = match &call {
                AgentCall::Request(n, _) | AgentCall::Capture(n, _) | AgentCall::Closed(n, _, _) => *n,
            };
            let Some(agent) = self.nodes[node].agent.as_ref().and_then(Weak::upgrade) else {
                continue;
            };
            let agent: Arc<dyn NodeAgent> = agent;
            let mut ctx = NodeCtx { net: self, node };
            match call {
                AgentCall::Request(_, req) => agent.on_content_request(&mut ctx, &req),
                AgentCall::Capture(_, seg) => agent.on_capture(&mut ctx, &seg),
                AgentCall::Closed(_, session, outcome) => agent.on_session_closed(&mut ctx, session, outcome),
            }
        }
        self.draining = false;
    }

    fn has_agent(&self, node: NodeId) -> bool {
        self.nodes[node].agent.as_ref().is_some_and(|w| w.strong_count() > 0)
    }

    fn route_segment(&mut self, at: NodeId, mut seg: Segment, origin: bool) {
        let node = &self.nodes[at];
        match resolve_next(&seg.dst, seg.position, node.understood, &node.routes) {
            Forwarding::DeliverLocal { position } => {
                seg.position = Some(position);
                self.deliver(at, seg);
            }
            Forwarding::Forward { next_hop, position } => {
                seg.position = position;
                if !origin && seg.is_content_traffic() && self.has_agent(at) {
                    self.calls.push_back(AgentCall::Capture(at, seg.clone()));
                }
                self.transmit(at, &next_hop, seg);
            }
            Forwarding::Unroutable => {
                self.log_segment("unroutable", at, &seg);
                if seg.is_syn() && !origin {
                    if let Some(s) = self.sessions.get(&seg.session) {
                        let back = self.dist[at][s.client.node].unwrap_or(0);
                        self.schedule(self.now + back, EventKind::Unreachable { session: seg.session });
                    }
                }
            }
        }
    }

    fn transmit(&mut self, from: NodeId, next_hop: &str, mut seg: Segment) {
        let link = self.by_name.get(next_hop).and_then(|to| self.adj[from].iter().find(|l| l.to == *to)).copied();
        let Some(link) = link else {
            self.log_segment("no-link", from, &seg);
            return;
        };
        if link.loss > 0.0 && self.rng.gen::<f64>() < link.loss {
            self.log_segment("lost", from, &seg);
            return;
        }
        seg.hops += 1;
        self.log_segment("send", from, &seg);
        self.schedule(self.now + link.delay, EventKind::Arrive { node: link.to, segment: seg });
    }

    /// Sends a raw segment from `node` through normal forwarding.
    pub fn inject(&mut self, node: NodeId, segment: Segment) {
        self.emit(node, segment);
        self.drain_calls();
    }

    /// Emits a segment originated at `node`.
    fn emit(&mut self, node: NodeId, seg: Segment) {
        self.route_segment(node, seg, true);
    }

    fn deliver(&mut self, at: NodeId, seg: Segment) {
        if seg.is_syn() {
            self.on_syn(at, seg);
        } else if seg.toward_server() {
            self.server_rx(at, seg);
        } else {
            self.client_rx(at, seg);
        }
    }

    fn arm(&mut self, session: SessionId, role: Role) {
        let Some(s) = self.sessions.get_mut(&session) else {
            return;
        };
        let generation = match role {
            Role::Client => {
                s.client.generation += 1;
                s.client.generation
            }
            Role::Server => match s.server.as_mut() {
                Some(srv) => {
                    srv.generation += 1;
                    srv.generation
                }
                None => return,
            },
        };
        self.schedule(self.now + self.rto, EventKind::Timer { session, role, generation });
    }

    // ---- client side ----

    /// Sends a SYN for `dag`'s intent from `node` and returns the session.
    /// The SYN's source address is an ephemeral SID with the node's AD/HID
    /// as fallback.
    pub fn connect(&mut self, node: NodeId, dag: &DagAddress) -> Result<SessionId, TransportError> {
        self.open(node, dag, Owner::Api)
    }

    fn open(&mut self, node: NodeId, dag: &DagAddress, owner: Owner) -> Result<SessionId, TransportError> {
        let intent = dag.intent();
        if !intent.xtype().is_content() {
            return Err(TransportError::NotContent(intent));
        }
        let n = &self.nodes[node];
        if resolve_next(dag, None, n.understood, &n.routes) == Forwarding::Unroutable {
            let line = format!("t={} unroutable node={} intent={intent}", self.now, n.name);
            self.log(line);
            return Err(TransportError::Unroutable);
        }
        let mut raw = [0u8; 8];
        let session = loop {
            self.rng.fill_bytes(&mut raw);
            let id = SessionId(raw);
            if !self.sessions.contains_key(&id) {
                break id;
            }
        };
        let sid = Xid::from_digest(XidType::Sid, &hash160(&raw));
        self.nodes[node].routes.add_local(sid);
        let src = DagAddress::with_fallback(sid, &[self.nodes[node].ad, self.nodes[node].hid])
            .expect("distinct node identifiers");
        let syn = Segment {
            session,
            seq: 0,
            flags: SegmentFlags::SYN,
            intent: Some(intent),
            src: src.clone(),
            dst: dag.clone(),
            position: None,
            hops: 0,
            payload: Vec::new(),
        };
        let stats = SessionStats {
            client: self.nodes[node].name.clone(),
            intent,
            provider: None,
            hops: None,
            data_segments: 0,
            segments_sent: 0,
            retransmits: 0,
        };
        let client = ClientEnd {
            node,
            owner,
            src,
            peer: None,
            syn: syn.clone(),
            status: ClientStatus::Connecting,
            retries: 0,
            idle: 0,
            generation: 0,
            expected: 0,
            buf: Vec::new(),
        };
        self.sessions.insert(session, Session { client, server: None, stats });
        self.emit(node, syn);
        if self.sessions[&session].client.status == ClientStatus::Connecting {
            self.arm(session, Role::Client);
        }
        self.drain_calls();
        Ok(session)
    }

    /// Moves the received bytes out of a completed session.
    pub fn take_received(&mut self, session: SessionId) -> Result<Vec<u8>, TransportError> {
        let s = self.sessions.get_mut(&session).ok_or(TransportError::UnknownSession)?;
        match std::mem::replace(&mut s.client.status, ClientStatus::Closed) {
            ClientStatus::Complete(bytes) => Ok(bytes),
            other => {
                s.client.status = other;
                Err(TransportError::BadState)
            }
        }
    }

    fn client_send(&mut self, session: SessionId, flags: SegmentFlags, seq: u32) {
        let Some(s) = self.sessions.get(&session) else {
            return;
        };
        let Some(peer) = s.client.peer.clone() else {
            return;
        };
        let seg = Segment {
            session,
            seq,
            flags,
            intent: None,
            src: s.client.src.clone(),
            dst: peer,
            position: None,
            hops: 0,
            payload: Vec::new(),
        };
        let node = s.client.node;
        self.emit(node, seg);
    }

    fn fail_client(&mut self, session: SessionId, err: TransportError) {
        let Some(s) = self.sessions.get_mut(&session) else {
            return;
        };
        s.client.status = ClientStatus::Failed(err.clone());
        s.client.generation += 1;
        if s.client.owner == Owner::Agent {
            self.calls.push_back(AgentCall::Closed(s.client.node, session, Err(err)));
        }
    }

    fn client_rx(&mut self, at: NodeId, seg: Segment) {
        let session = seg.session;
        let Some(s) = self.sessions.get_mut(&session) else {
            self.log_segment("no-session", at, &seg);
            return;
        };
        let c = &mut s.client;
        if c.node != at {
            return;
        }
        c.idle = 0;
        if seg.flags.contains(SegmentFlags::SYNACK) {
            match c.status {
                ClientStatus::Connecting => {
                    c.status = ClientStatus::Established;
                    c.peer = Some(seg.src.clone());
                    c.retries = 0;
                    self.log_segment("established", at, &seg);
                    self.client_send(session, SegmentFlags::ACK, 0);
                    self.arm(session, Role::Client);
                }
                ClientStatus::Established => {
                    let expected = c.expected;
                    self.client_send(session, SegmentFlags::ACK, expected);
                }
                _ => {}
            }
        } else if seg.flags.contains(SegmentFlags::FIN) {
            match c.status {
                ClientStatus::Established if seg.seq == c.expected => {
                    let bytes = std::mem::take(&mut c.buf);
                    c.generation += 1;
                    if c.owner == Owner::Agent {
                        c.status = ClientStatus::Closed;
                        self.calls.push_back(AgentCall::Closed(at, session, Ok(bytes)));
                    } else {
                        c.status = ClientStatus::Complete(bytes);
                    }
                    self.log_segment("complete", at, &seg);
                    self.client_send(session, SegmentFlags::ACK | SegmentFlags::FIN, seg.seq);
                }
                ClientStatus::Established => {
                    let expected = c.expected;
                    self.client_send(session, SegmentFlags::ACK, expected);
                }
                ClientStatus::Complete(_) | ClientStatus::Closed => {
                    self.client_send(session, SegmentFlags::ACK | SegmentFlags::FIN, seg.seq);
                }
                _ => {}
            }
        } else {
            match c.status {
                ClientStatus::Established => {
                    if seg.seq == c.expected {
                        c.buf.extend_from_slice(&seg.payload);
                        c.expected += 1;
                    }
                    let expected = c.expected;
                    self.client_send(session, SegmentFlags::ACK, expected);
                }
                ClientStatus::Complete(_) | ClientStatus::Closed => {
                    let expected = c.expected;
                    self.client_send(session, SegmentFlags::ACK, expected);
                }
                _ => {}
            }
        }
    }

    // ---- server side ----

    fn on_syn(&mut self, at: NodeId, seg: Segment) {
        let session = seg.session;
        if let Some(srv) = self.sessions.get(&session).and_then(|s| s.server.as_ref()) {
            if srv.node == at && srv.phase == Phase::SynAckSent {
                self.send_synack(session, true);
            }
            return;
        }
        let node = &mut self.nodes[at];
        if node.pending.iter().any(|p| p.session == session) {
            return;
        }
        let req = ContentRequest { session, intent: seg.intent.unwrap_or_else(|| seg.dst.intent()), hops: seg.hops };
        node.pending.push_back(req.clone());
        node.peers.insert(session, seg.src.clone());
        self.log_segment("request", at, &seg);
        if self.has_agent(at) {
            self.calls.push_back(AgentCall::Request(at, req));
        }
    }

    /// Accepts the oldest pending request at `node`.
    pub fn accept_as(&mut self, node: NodeId) -> Option<(SessionId, Xid)> {
        let session = self.nodes[node].pending.front()?.session;
        let intent = self.accept_session(node, session)?;
        Some((session, intent))
    }

    /// Accepts a specific pending request, answering with a SYNACK whose
    /// source is pinned to this node: `AD -> HID -> intent`.
    pub fn accept_session(&mut self, node: NodeId, session: SessionId) -> Option<Xid> {
        let n = &mut self.nodes[node];
        let idx = n.pending.iter().position(|p| p.session == session)?;
        let req = n.pending.remove(idx).expect("index in range");
        let peer = n.peers.remove(&session)?;
        let src = DagAddress::chain(&[n.ad, n.hid, req.intent]).expect("distinct identifiers");
        let name = n.name.clone();
        n.accepted += 1;
        let s = self.sessions.get_mut(&session)?;
        s.stats.provider = Some(name);
        s.stats.hops = Some(req.hops);
        s.server = Some(ServerEnd {
            node,
            intent: req.intent,
            src,
            peer,
            phase: Phase::SynAckSent,
            data: None,
            base: 0,
            next: 0,
            retries: 0,
            generation: 0,
        });
        self.send_synack(session, false);
        self.arm(session, Role::Server);
        self.drain_calls();
        Some(req.intent)
    }

    /// Drops a pending request, or resets an accepted server session.
    pub fn abort(&mut self, node: NodeId, session: SessionId) {
        let n = &mut self.nodes[node];
        n.pending.retain(|p| p.session != session);
        n.peers.remove(&session);
        if let Some(srv) = self.sessions.get_mut(&session).and_then(|s| s.server.as_mut()) {
            if srv.node == node {
                srv.phase = Phase::Failed;
                srv.generation += 1;
            }
        }
    }

    /// Queues `bytes` on an accepted session. Transmission starts once the
    /// handshake completes.
    pub fn send_chunk(&mut self, session: SessionId, bytes: &[u8]) -> Result<(), TransportError> {
        let seg_size = self.config.segment_size.max(1);
        let s = self.sessions.get_mut(&session).ok_or(TransportError::UnknownSession)?;
        let srv = s.server.as_mut().ok_or(TransportError::BadState)?;
        if srv.data.is_some() || !matches!(srv.phase, Phase::SynAckSent | Phase::Open) {
            return Err(TransportError::BadState);
        }
        let segments: Vec<Vec<u8>> = bytes.chunks(seg_size).map(<[u8]>::to_vec).collect();
        s.stats.data_segments = segments.len() as u32;
        srv.data = Some(segments);
        if srv.phase == Phase::Open {
            self.start_sending(session);
        }
        self.drain_calls();
        Ok(())
    }

    fn server_segment(&self, session: SessionId, flags: SegmentFlags, seq: u32, payload: Vec<u8>) -> Option<(NodeId, Segment)> {
        let srv = self.sessions.get(&session)?.server.as_ref()?;
        let intent = flags.contains(SegmentFlags::SYNACK).then_some(srv.intent);
        let seg = Segment {
            session,
            seq,
            flags,
            intent,
            src: srv.src.clone(),
            dst: srv.peer.clone(),
            position: None,
            hops: 0,
            payload,
        };
        Some((srv.node, seg))
    }

    fn send_synack(&mut self, session: SessionId, retransmit: bool) {
        if let Some((node, seg)) = self.server_segment(session, SegmentFlags::SYNACK, 0, Vec::new()) {
            self.count(session, retransmit);
            self.emit(node, seg);
        }
    }

    fn count(&mut self, session: SessionId, retransmit: bool) {
        if let Some(s) = self.sessions.get_mut(&session) {
            s.stats.segments_sent += 1;
            if retransmit {
                s.stats.retransmits += 1;
            }
        }
    }

    fn send_data(&mut self, session: SessionId, seq: u32, retransmit: bool) {
        let payload = self
            .sessions
            .get(&session)
            .and_then(|s| s.server.as_ref())
            .and_then(|srv| srv.data.as_ref())
            .and_then(|d| d.get(seq as usize))
            .cloned();
        let Some(payload) = payload else {
            return;
        };
        if let Some((node, seg)) = self.server_segment(session, SegmentFlags::empty(), seq, payload) {
            self.count(session, retransmit);
            self.emit(node, seg);
        }
    }

    fn send_fin(&mut self, session: SessionId, retransmit: bool) {
        let Some(srv) = self.sessions.get_mut(&session).and_then(|s| s.server.as_mut()) else {
            return;
        };
        srv.phase = Phase::FinSent;
        let n = srv.data.as_ref().map_or(0, Vec::len) as u32;
        if let Some((node, seg)) = self.server_segment(session, SegmentFlags::FIN, n, Vec::new()) {
            self.count(session, retransmit);
            self.emit(node, seg);
        }
    }

    fn start_sending(&mut self, session: SessionId) {
        let Some(srv) = self.sessions.get_mut(&session).and_then(|s| s.server.as_mut()) else {
            return;
        };
        srv.phase = Phase::Sending;
        srv.base = 0;
        srv.next = 0;
        self.fill_window(session);
        self.arm(session, Role::Server);
    }

    fn fill_window(&mut self, session: SessionId) {
        let window = self.config.window.max(1);
        loop {
            let Some(srv) = self.sessions.get_mut(&session).and_then(|s| s.server.as_mut()) else {
                return;
            };
            let n = srv.data.as_ref().map_or(0, Vec::len) as u32;
            if srv.base == n {
                self.send_fin(session, false);
                return;
            }
            if srv.next >= n || srv.next >= srv.base + window {
                return;
            }
            let seq = srv.next;
            srv.next += 1;
            self.send_data(session, seq, false);
        }
    }

    fn server_rx(&mut self, at: NodeId, seg: Segment) {
        let session = seg.session;
        let Some(srv) = self.sessions.get_mut(&session).and_then(|s| s.server.as_mut()) else {
            self.log_segment("no-session", at, &seg);
            return;
        };
        if srv.node != at {
            return;
        }
        match srv.phase {
            Phase::SynAckSent => {
                srv.phase = Phase::Open;
                srv.retries = 0;
                srv.generation += 1;
                if srv.data.is_some() {
                    self.start_sending(session);
                }
            }
            Phase::Sending => {
                let n = srv.data.as_ref().map_or(0, Vec::len) as u32;
                let acked = seg.seq.min(n);
                if acked > srv.base {
                    srv.base = acked;
                    srv.retries = 0;
                    self.fill_window(session);
                    self.arm(session, Role::Server);
                }
            }
            Phase::FinSent => {
                if seg.flags.contains(SegmentFlags::FIN) {
                    srv.phase = Phase::Closed;
                    srv.generation += 1;
                    self.log_segment("closed", at, &seg);
                }
            }
            Phase::Open | Phase::Closed | Phase::Failed => {}
        }
    }

    fn on_timer(&mut self, session: SessionId, role: Role, generation: u64) {
        let cap = self.config.retry_cap;
        let Some(s) = self.sessions.get_mut(&session) else {
            return;
        };
        match role {
            Role::Client => {
                let c = &mut s.client;
                if c.generation != generation {
                    return;
                }
                match c.status {
                    ClientStatus::Connecting => {
                        c.retries += 1;
                        if c.retries > cap {
                            self.fail_client(session, TransportError::ConnectTimeout);
                            return;
                        }
                        let (node, syn) = (c.node, c.syn.clone());
                        s.stats.retransmits += 1;
                        self.emit(node, syn);
                        self.arm(session, Role::Client);
                    }
                    ClientStatus::Established => {
                        c.idle += 1;
                        if c.idle > 2 * cap {
                            self.fail_client(session, TransportError::Reset);
                            return;
                        }
                        self.arm(session, Role::Client);
                    }
                    _ => {}
                }
            }
            Role::Server => {
                let Some(srv) = s.server.as_mut() else {
                    return;
                };
                if srv.generation != generation {
                    return;
                }
                srv.retries += 1;
                if srv.retries > cap {
                    srv.phase = Phase::Failed;
                    let line = format!("t={} reset session={session}", self.now);
                    self.log(line);
                    return;
                }
                match srv.phase {
                    Phase::SynAckSent => self.send_synack(session, true),
                    Phase::Sending => {
                        let (base, next) = (srv.base, srv.next);
                        for seq in base..next {
                            self.send_data(session, seq, true);
                        }
                    }
                    Phase::FinSent => self.send_fin(session, true),
                    _ => return,
                }
                self.arm(session, Role::Server);
            }
        }
    }

    // ---- agent plumbing ----

    pub(crate) fn open_for_agent(&mut self, node: NodeId, dag: &DagAddress) -> Result<SessionId, TransportError> {
        self.open(node, dag, Owner::Agent)
    }
}

use thiserror::Error;

use super::xid::Xid;

/// Upper bound on the number of nodes in one address.
pub const MAX_DAG_NODES: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AddressError {
    #[error("address has no nodes")]
    Empty,
    #[error("address has {0} nodes, limit is {MAX_DAG_NODES}")]
    TooLarge(usize),
    #[error("source has no outgoing edges")]
    NoSourceEdges,
    #[error("edge from {from} points at node {to}, which does not exist")]
    EdgeOutOfRange { from: String, to: usize },
    #[error("edge from {from} to node {to} is listed twice")]
    DuplicateEdge { from: String, to: usize },
    #[error("identifier {0} appears more than once")]
    DuplicateXid(Xid),
    #[error("cycle through node {0}")]
    Cycle(usize),
    #[error("node {0} is not reachable from the source")]
    Unreachable(usize),
    #[error("address must have exactly one sink, found {0}")]
    SinkCount(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DagNode {
    pub xid: Xid,
    /// Out-edges in priority order, highest first.
    pub edges: Vec<usize>,
}

/// A network address: a DAG of principals rooted at an implicit source.
///
/// Values are always validated and stored in canonical node order, so two
/// addresses describing the same graph compare equal regardless of how their
/// nodes were numbered on input.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DagAddress {
    nodes: Vec<DagNode>,
    source_edges: Vec<usize>,
    intent: usize,
}

/// Orders the nodes of a (valid) graph: depth-first from the source, taking
/// each node's out-edges lowest priority first, numbering on first visit.
///
/// Returns the input indices in numbering order: `order[k]` is the input
/// node that receives number `k`.
pub fn canonical_numbering(source_edges: &[usize], edges: &[Vec<usize>]) -> Vec<usize> {
    fn visit(node: usize, edges: &[Vec<usize>], seen: &mut [bool], order: &mut Vec<usize>) {
        if seen[node] {
            return;
        }
        seen[node] = true;
        order.push(node);
        for &next in edges[node].iter().rev() {
            visit(next, edges, seen, order);
        }
    }

    let mut seen = vec![false; edges.len()];
    let mut order = Vec::with_capacity(edges.len());
    for &first in source_edges.iter().rev() {
        visit(first, edges, &mut seen, &mut order);
    }
    order
}

fn edge_owner(from: Option<usize>) -> String {
    from.map_or_else(|| "source".to_string(), |n| format!("node {n}"))
}

fn check_edge_list(from: Option<usize>, list: &[usize], len: usize) -> Result<(), AddressError> {
    for (i, &to) in list.iter().enumerate() {
        if to >= len {
            return Err(AddressError::EdgeOutOfRange { from: edge_owner(from), to });
        }
        if list[..i].contains(&to) {
            return Err(AddressError::DuplicateEdge { from: edge_owner(from), to });
        }
    }
    Ok(())
}

/// Checks every structural invariant of an address given as raw parts.
pub fn validate(nodes: &[(Xid, Vec<usize>)], source_edges: &[usize]) -> Result<usize, AddressError> {
    let len = nodes.len();
    if len == 0 {
        return Err(AddressError::Empty);
    }
    if len > MAX_DAG_NODES {
        return Err(AddressError::TooLarge(len));
    }
    if source_edges.is_empty() {
        return Err(AddressError::NoSourceEdges);
    }
    check_edge_list(None, source_edges, len)?;
    for (i, (_, edges)) in nodes.iter().enumerate() {
        check_edge_list(Some(i), edges, len)?;
    }
    for (i, (xid, _)) in nodes.iter().enumerate() {
        if nodes[..i].iter().any(|(other, _)| other == xid) {
            return Err(AddressError::DuplicateXid(*xid));
        }
    }

    // 0 = unvisited, 1 = on stack, 2 = done
    fn dfs(n: usize, nodes: &[(Xid, Vec<usize>)], color: &mut [u8]) -> Result<(), AddressError> {
        match color[n] {
            1 => return Err(AddressError::Cycle(n)),
            2 => return Ok(()),
            _ => {}
        }
        color[n] = 1;
        for &next in &nodes[n].1 {
            dfs(next, nodes, color)?;
        }
        color[n] = 2;
        Ok(())
    }
    let mut color = vec![0u8; len];
    for &first in source_edges {
        dfs(first, nodes, &mut color)?;
    }
    // Unreached nodes may still hide a cycle; report it as such first.
    for n in 0..len {
        if color[n] == 0 {
            let mut scratch = color.clone();
            dfs(n, nodes, &mut scratch)?;
        }
    }
    if let Some(n) = color.iter().position(|c| *c == 0) {
        return Err(AddressError::Unreachable(n));
    }

    let sinks: Vec<usize> = (0..len).filter(|&n| nodes[n].1.is_empty()).collect();
    if sinks.len() != 1 {
        return Err(AddressError::SinkCount(sinks.len()));
    }
    Ok(sinks[0])
}

impl DagAddress {
    /// Validates the graph and stores it in canonical order.
    pub fn new(nodes: Vec<(Xid, Vec<usize>)>, source_edges: Vec<usize>) -> Result<Self, AddressError> {
        validate(&nodes, &source_edges)?;
        let edges: Vec<Vec<usize>> = nodes.iter().map(|(_, e)| e.clone()).collect();
        let order = canonical_numbering(&source_edges, &edges);
        let mut rank = vec![0usize; nodes.len()];
        for (new, &old) in order.iter().enumerate() {
            rank[old] = new;
        }
        let canonical: Vec<DagNode> = order
            .iter()
            .map(|&old| DagNode {
                xid: nodes[old].0,
                edges: nodes[old].1.iter().map(|&e| rank[e]).collect(),
            })
            .collect();
        let intent = canonical
            .iter()
            .position(|n| n.edges.is_empty())
            .expect("validated address has a sink");
        Ok(Self {
            nodes: canonical,
            source_edges: source_edges.iter().map(|&e| rank[e]).collect(),
            intent,
        })
    }

    /// A one-node address naming `xid` directly.
    pub fn direct(xid: Xid) -> Self {
        Self {
            nodes: vec![DagNode { xid, edges: Vec::new() }],
            source_edges: vec![0],
            intent: 0,
        }
    }

    /// The intent as the first choice, with `fallback_path` as a second
    /// source edge whose chain ends at the intent.
    pub fn with_fallback(intent: Xid, fallback_path: &[Xid]) -> Result<Self, AddressError> {
        if fallback_path.is_empty() {
            return Ok(Self::direct(intent));
        }
        let n = fallback_path.len();
        let mut nodes = vec![(intent, Vec::new())];
        for (i, xid) in fallback_path.iter().enumerate() {
            let next = if i + 1 < n { i + 2 } else { 0 };
            nodes.push((*xid, vec![next]));
        }
        Self::new(nodes, vec![0, 1])
    }

    /// A single path with no alternatives: source → path[0] → ... → last.
    pub fn chain(path: &[Xid]) -> Result<Self, AddressError> {
        if path.is_empty() {
            return Err(AddressError::Empty);
        }
        let nodes = path
            .iter()
            .enumerate()
            .map(|(i, xid)| (*xid, if i + 1 < path.len() { vec![i + 1] } else { Vec::new() }))
            .collect();
        Self::new(nodes, vec![0])
    }

    pub fn nodes(&self) -> &[DagNode] {
        &self.nodes
    }

    pub fn node(&self, index: usize) -> &DagNode {
        &self.nodes[index]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn source_edges(&self) -> &[usize] {
        &self.source_edges
    }

    /// Out-edges from a traversal position; `None` is the source.
    pub fn edges_from(&self, position: Option<usize>) -> &[usize] {
        match position {
            None => &self.source_edges,
            Some(n) => &self.nodes[n].edges,
        }
    }

    pub fn intent_index(&self) -> usize {
        self.intent
    }

    pub fn intent(&self) -> Xid {
        self.nodes[self.intent].xid
    }

    pub fn contains(&self, xid: &Xid) -> bool {
        self.nodes.iter().any(|n| n.xid == *xid)
    }

    /// Non-intent nodes along the lowest-priority path from the source,
    /// e.g. the AD/HID fallback of a published content address.
    pub fn fallback_path(&self) -> Vec<Xid> {
        let mut path = Vec::new();
        let mut at = *self.source_edges.last().expect("validated");
        while at != self.intent {
            path.push(self.nodes[at].xid);
            at = *self.nodes[at].edges.last().expect("non-sink has edges");
        }
        path
    }

    /// Same graph with the intent identifier replaced.
    pub fn with_intent(&self, intent: Xid) -> Result<Self, AddressError> {
        let nodes = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (if i == self.intent { intent } else { n.xid }, n.edges.clone()))
            .collect();
        Self::new(nodes, self.source_edges.clone())
    }
}

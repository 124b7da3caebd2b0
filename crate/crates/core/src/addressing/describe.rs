//! Plain-text edge lists for DAG addresses.
//!
//! ```text
//! source -> CID-C AD-B
//! AD-B -> HID-P
//! HID-P -> CID-C
//! ```
//!
//! Targets on a line are in priority order. The one node without out-edges
//! is the intent. Blank lines and `#` comments are ignored.

use super::{AddressError, DagAddress, Xid};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DescribeError {
    #[error("line {line}: expected `<from> -> <to>...`")]
    Syntax { line: usize },
    #[error("line {line}: bad identifier {token:?}")]
    BadXid { line: usize, token: String },
    #[error("line {line}: edges from {from} listed twice")]
    Repeated { line: usize, from: String },
    #[error("no `source` line")]
    NoSource,
    #[error(transparent)]
    Address(#[from] AddressError),
}

pub fn parse_dag_description(text: &str) -> Result<DagAddress, DescribeError> {
    let mut order: Vec<Xid> = Vec::new();
    let mut edges: Vec<Option<Vec<Xid>>> = Vec::new();
    let mut source: Option<Vec<Xid>> = None;
    let index_of = |x: Xid, order: &mut Vec<Xid>, edges: &mut Vec<Option<Vec<Xid>>>| match order
        .iter()
        .position(|o| *o == x)
    {
        Some(i) => i,
        None => {
            order.push(x);
            edges.push(None);
            order.len() - 1
        }
    };
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (from, to) = body.split_once("->").ok_or(DescribeError::Syntax { line })?;
        let from = from.trim();
        let targets = to
            .split_whitespace()
            .map(|t| t.parse::<Xid>().map_err(|_| DescribeError::BadXid { line, token: t.to_string() }))
            .collect::<Result<Vec<_>, _>>()?;
        if from.is_empty() || targets.is_empty() {
            return Err(DescribeError::Syntax { line });
        }
        for t in &targets {
            index_of(*t, &mut order, &mut edges);
        }
        if from == "source" {
            if source.replace(targets).is_some() {
                return Err(DescribeError::Repeated { line, from: from.to_string() });
            }
            continue;
        }
        let x: Xid = from.parse().map_err(|_| DescribeError::BadXid { line, token: from.to_string() })?;
        let n = index_of(x, &mut order, &mut edges);
        if edges[n].replace(targets).is_some() {
            return Err(DescribeError::Repeated { line, from: from.to_string() });
        }
    }
    let source = source.ok_or(DescribeError::NoSource)?;
    let pos = |x: &Xid| order.iter().position(|o| o == x).expect("every target was indexed");
    let nodes = order
        .iter()
        .zip(&edges)
        .map(|(x, e)| (*x, e.as_deref().unwrap_or(&[]).iter().map(pos).collect()))
        .collect();
    Ok(DagAddress::new(nodes, source.iter().map(pos).collect())?)
}

/// The edge list for `dag`, nodes in canonical order.
pub fn describe_dag(dag: &DagAddress) -> String {
    let list = |edges: &[usize]| edges.iter().map(|&e| dag.node(e).xid.to_string()).collect::<Vec<_>>().join(" ");
    let mut out = format!("source -> {}\n", list(dag.source_edges()));
    for node in dag.nodes() {
        if !node.edges.is_empty() {
            out.push_str(&format!("{} -> {}\n", node.xid, list(&node.edges)));
        }
    }
    out
}

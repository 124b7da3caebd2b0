//! Principal identifiers and DAG addresses with fallbacks.
//!
//! An address is a small DAG whose sink is the intent. Out-edges carry a
//! priority order, so a node that cannot use the preferred edge (unknown
//! principal type, no route) can take a lower-priority one instead.

mod dag;
mod describe;
mod route;
mod xid;

pub use describe::{describe_dag, parse_dag_description, DescribeError};
pub use dag::{canonical_numbering, validate, AddressError, DagAddress, DagNode, MAX_DAG_NODES};
pub use route::{resolve_next, Forwarding, RouteTable};
pub use xid::{Xid, XidParseError, XidType, XidTypeSet, MAX_SYMBOLIC_LABEL, XID_LEN};

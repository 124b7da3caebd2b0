use std::fmt;

use bitflags::bitflags;

use crate::addressing::{DagAddress, Xid};

/// 8-byte transport session identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SessionId(pub [u8; 8]);

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

bitflags! {
    /// Segments with no flags carry data.
    #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
    pub struct SegmentFlags: u8 {
        const SYN = 0b0001;
        const SYNACK = 0b0010;
        const ACK = 0b0100;
        const FIN = 0b1000;
    }
}

impl fmt::Display for SegmentFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return f.write_str("DATA");
        }
        let names: Vec<&str> = self.iter_names().map(|(n, _)| n).collect();
        f.write_str(&names.join("|"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub session: SessionId,
    /// Data index for data/FIN; cumulative "next expected" for ACKs.
    pub seq: u32,
    pub flags: SegmentFlags,
    /// Requested content, on SYN and SYNACK.
    pub intent: Option<Xid>,
    pub src: DagAddress,
    pub dst: DagAddress,
    /// Last node of `dst` reached so far.
    pub position: Option<usize>,
    pub hops: u32,
    pub payload: Vec<u8>,
}

impl Segment {
    pub fn is_syn(&self) -> bool {
        self.flags.contains(SegmentFlags::SYN)
    }

    /// SYNs and ACKs travel client to server; everything else the other way.
    pub fn toward_server(&self) -> bool {
        self.flags.intersects(SegmentFlags::SYN | SegmentFlags::ACK)
    }

    /// Whether either end of the segment is a content principal.
    pub fn is_content_traffic(&self) -> bool {
        self.src.intent().xtype().is_content() || self.dst.intent().xtype().is_content()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flag_display() {
        assert_eq!(SegmentFlags::empty().to_string(), "DATA");
        assert_eq!((SegmentFlags::ACK | SegmentFlags::FIN).to_string(), "ACK|FIN");
    }

    #[test]
    fn direction() {
        let dag = DagAddress::direct("CID-C".parse().unwrap());
        let mut s = Segment {
            session: SessionId([0; 8]),
            seq: 0,
            flags: SegmentFlags::SYN,
            intent: None,
            src: dag.clone(),
            dst: dag,
            position: None,
            hops: 0,
            payload: vec![],
        };
        assert!(s.toward_server());
        s.flags = SegmentFlags::FIN;
        assert!(!s.toward_server());
        s.flags = SegmentFlags::ACK | SegmentFlags::FIN;
        assert!(s.toward_server());
        assert!(s.is_content_traffic());
    }
}

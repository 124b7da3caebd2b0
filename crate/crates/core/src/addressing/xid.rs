use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Width of every principal identifier, in bytes.
pub const XID_LEN: usize = 20;

/// Longest label accepted by the symbolic fixture encoding.
pub const MAX_SYMBOLIC_LABEL: usize = 16;

/// Principal types understood by the architecture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum XidType {
    Ad,
    Hid,
    Sid,
    Cid,
    Ncid,
}

impl XidType {
    pub const ALL: [XidType; 5] = [
        XidType::Ad,
        XidType::Hid,
        XidType::Sid,
        XidType::Cid,
        XidType::Ncid,
    ];

    /// Tag used in the textual form, e.g. `HID` in `HID-<hex>`.
    pub fn tag(self) -> &'static str {
        match self {
            XidType::Ad => "AD",
            XidType::Hid => "HID",
            XidType::Sid => "SID",
            XidType::Cid => "CID",
            XidType::Ncid => "nCID",
        }
    }

    /// Lowercase URL scheme for DAGs whose intent has this type.
    pub fn scheme(self) -> &'static str {
        match self {
            XidType::Ad => "ad",
            XidType::Hid => "hid",
            XidType::Sid => "sid",
            XidType::Cid => "cid",
            XidType::Ncid => "ncid",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.tag() == tag)
    }

    pub fn from_scheme(scheme: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.scheme() == scheme)
    }

    /// Wire code used by the chunk layout.
    pub fn code(self) -> u8 {
        match self {
            XidType::Ad => 1,
            XidType::Hid => 2,
            XidType::Sid => 3,
            XidType::Cid => 4,
            XidType::Ncid => 5,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.code() == code)
    }

    /// Content principals: the ones served by caches and captured on path.
    pub fn is_content(self) -> bool {
        matches!(self, XidType::Cid | XidType::Ncid)
    }
}

impl fmt::Display for XidType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// A set of principal types, e.g. the types a node understands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct XidTypeSet(u8);

impl XidTypeSet {
    pub fn all() -> Self {
        Self::of(&XidType::ALL)
    }

    pub fn empty() -> Self {
        Self(0)
    }

    pub fn of(types: &[XidType]) -> Self {
        let mut set = Self::empty();
        for t in types {
            set.insert(*t);
        }
        set
    }

    pub fn insert(&mut self, t: XidType) {
        self.0 |= 1 << t.code();
    }

    pub fn remove(&mut self, t: XidType) {
        self.0 &= !(1 << t.code());
    }

    pub fn contains(&self, t: XidType) -> bool {
        self.0 & (1 << t.code()) != 0
    }

    pub fn iter(self) -> impl Iterator<Item = XidType> {
        XidType::ALL.into_iter().filter(move |t| self.contains(*t))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum XidParseError {
    #[error("missing '-' between type tag and value in {0:?}")]
    MissingSeparator(String),
    #[error("unknown principal type tag {0:?}")]
    UnknownType(String),
    #[error("invalid identifier value {0:?}: expected 40 hex chars or a short symbolic label")]
    BadValue(String),
}

/// A typed 160-bit principal identifier.
///
/// Equality and ordering are over `(type, value bytes)`. Values are normally
/// hash outputs and print as 40 lowercase hex chars. Short symbolic values
/// such as the `B` in `AD-B` are a fixture encoding: a leading zero byte,
/// the ASCII label, then zero padding. Such values print back as their label.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Xid {
    xtype: XidType,
    value: [u8; XID_LEN],
}

impl Xid {
    pub fn new(xtype: XidType, value: [u8; XID_LEN]) -> Self {
        Self { xtype, value }
    }

    /// Builds an identifier from the first 20 bytes of a digest.
    pub fn from_digest(xtype: XidType, digest: &[u8]) -> Self {
        let mut value = [0u8; XID_LEN];
        value.copy_from_slice(&digest[..XID_LEN]);
        Self { xtype, value }
    }

    /// Fixture identifier such as `AD-B`.
    pub fn symbolic(xtype: XidType, label: &str) -> Result<Self, XidParseError> {
        if !is_symbolic_label(label) {
            return Err(XidParseError::BadValue(label.to_string()));
        }
        let mut value = [0u8; XID_LEN];
        value[1..1 + label.len()].copy_from_slice(label.as_bytes());
        Ok(Self { xtype, value })
    }

    pub fn xtype(&self) -> XidType {
        self.xtype
    }

    pub fn value(&self) -> &[u8; XID_LEN] {
        &self.value
    }

    pub fn hex(&self) -> String {
        hex::encode(self.value)
    }

    /// The label of a symbolic fixture value, if this is one.
    pub fn symbolic_label(&self) -> Option<&str> {
        if self.value[0] != 0 {
            return None;
        }
        let body = &self.value[1..];
        let len = body.iter().position(|b| *b == 0).unwrap_or(body.len());
        if len == 0 || len > MAX_SYMBOLIC_LABEL || body[len..].iter().any(|b| *b != 0) {
            return None;
        }
        let label = std::str::from_utf8(&body[..len]).ok()?;
        is_symbolic_label(label).then_some(label)
    }
}

fn is_symbolic_label(label: &str) -> bool {
    !label.is_empty()
        && label.len() <= MAX_SYMBOLIC_LABEL
        && label
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'.' || b == b'-')
}

impl fmt::Display for Xid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.symbolic_label() {
            Some(label) => write!(f, "{}-{}", self.xtype.tag(), label),
            None => write!(f, "{}-{}", self.xtype.tag(), self.hex()),
        }
    }
}

impl fmt::Debug for Xid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for Xid {
    type Err = XidParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (tag, rest) = s
            .split_once('-')
            .ok_or_else(|| XidParseError::MissingSeparator(s.to_string()))?;
        let xtype = XidType::from_tag(tag).ok_or_else(|| XidParseError::UnknownType(tag.to_string()))?;
        if rest.len() == 2 * XID_LEN && rest.bytes().all(|b| b.is_ascii_hexdigit()) {
            let mut value = [0u8; XID_LEN];
            hex::decode_to_slice(rest, &mut value)
                .map_err(|_| XidParseError::BadValue(rest.to_string()))?;
            return Ok(Self { xtype, value });
        }
        Self::symbolic(xtype, rest)
    }
}

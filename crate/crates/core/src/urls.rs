//! URL forms for addresses.
//!
//! `<scheme>://E0,E1/X0,e,e/X1,e/...` serializes any DAG address: the first
//! segment lists the source's out-edges, then one segment per node in
//! canonical order with the node's identifier and out-edge numbers. The
//! scheme is the lowercase type of the intent.
//!
//! `ncid://address/key=value&key=value` names a content representation by a
//! human-readable address plus locators such as `UserAgent` or `PubCert`.

use std::fmt;
use std::str::FromStr;

use percent_encoding::{percent_decode_str, utf8_percent_encode, AsciiSet, CONTROLS};
use thiserror::Error;

use crate::addressing::{validate, AddressError, DagAddress, Xid, XidParseError, XidType, MAX_DAG_NODES};
use crate::chunking::{compute_ncid, fingerprint, ChunkError};

/// Locator naming the address of the publisher's key certificate.
pub const LOCATOR_PUB_CERT: &str = "PubCert";
pub const LOCATOR_VERSION: &str = "Version";
pub const LOCATOR_USER_AGENT: &str = "UserAgent";

const NCID_PREFIX: &str = "ncid://";

/// Escaped in locator keys and values.
const LOCATOR_SET: &AsciiSet = &CONTROLS.add(b'/').add(b'&').add(b'=').add(b'%').add(b'#');
/// Escaped in the address; `/` stays literal there.
const ADDRESS_SET: &AsciiSet = &CONTROLS.add(b'&').add(b'=').add(b'%').add(b'#');

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum UrlErrorKind {
    #[error("missing \"://\" after the scheme")]
    MissingScheme,
    #[error("unknown scheme {0:?}")]
    UnknownScheme(String),
    #[error("scheme {scheme:?} does not match intent type {intent}")]
    SchemeMismatch { scheme: String, intent: XidType },
    #[error("empty segment")]
    EmptySegment,
    #[error("bad edge index {0:?}")]
    BadIndex(String),
    #[error("edge index {0} is out of range")]
    IndexOutOfRange(usize),
    #[error("bad identifier: {0}")]
    BadXid(XidParseError),
    #[error("invalid address: {0}")]
    Address(AddressError),
    #[error("empty address")]
    EmptyAddress,
    #[error("missing '/' between address and locators")]
    MissingLocatorSlash,
    #[error("locator without '='")]
    MissingEquals,
    #[error("empty locator key")]
    EmptyKey,
    #[error("duplicate locator key {0:?}")]
    DuplicateKey(String),
    #[error("bad percent-escape")]
    BadEscape,
    #[error("escaped bytes are not valid UTF-8")]
    InvalidUtf8,
    #[error("unescaped reserved character {0:?}")]
    ReservedChar(char),
}

/// A URL parse failure; `position` is a byte offset into the input.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("at byte {position}: {kind}")]
pub struct UrlError {
    pub position: usize,
    pub kind: UrlErrorKind,
}

impl UrlError {
    fn at(position: usize, kind: UrlErrorKind) -> Self {
        Self { position, kind }
    }
}

/// Serializes `dag` as `<scheme>://...`.
pub fn serialize_dag_url(dag: &DagAddress) -> String {
    let mut out = String::with_capacity(16 + dag.len() * 48);
    out.push_str(dag.intent().xtype().scheme());
    out.push_str("://");
    push_indices(&mut out, dag.source_edges());
    for node in dag.nodes() {
        out.push('/');
        out.push_str(&node.xid.to_string());
        if !node.edges.is_empty() {
            out.push(',');
            push_indices(&mut out, &node.edges);
        }
    }
    out
}

fn push_indices(out: &mut String, indices: &[usize]) {
    for (i, e) in indices.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&e.to_string());
    }
}

fn parse_index(token: &str, position: usize) -> Result<usize, UrlError> {
    if token.is_empty() || !token.bytes().all(|b| b.is_ascii_digit()) {
        return Err(UrlError::at(position, UrlErrorKind::BadIndex(token.to_string())));
    }
    token
        .parse::<usize>()
        .map_err(|_| UrlError::at(position, UrlErrorKind::BadIndex(token.to_string())))
}

/// Parses a DAG URL. Node numbering in the input may be any valid one; the
/// result is canonical.
pub fn parse_dag_url(url: &str) -> Result<DagAddress, UrlError> {
    let sep = url.find("://").ok_or_else(|| UrlError::at(0, UrlErrorKind::MissingScheme))?;
    let scheme = &url[..sep];
    let scheme_type = XidType::from_scheme(scheme)
        .ok_or_else(|| UrlError::at(0, UrlErrorKind::UnknownScheme(scheme.to_string())))?;
    let body_start = sep + 3;
    let body = &url[body_start..];

    // (offset, text) of every '/'-separated segment
    let mut segments = Vec::new();
    let mut offset = body_start;
    for seg in body.split('/') {
        segments.push((offset, seg));
        offset += seg.len() + 1;
    }
    let node_count = segments.len() - 1;
    if node_count > MAX_DAG_NODES {
        return Err(UrlError::at(
            segments[MAX_DAG_NODES + 1].0,
            UrlErrorKind::Address(AddressError::TooLarge(node_count)),
        ));
    }

    let parse_list = |tokens: &mut dyn Iterator<Item = (usize, &str)>| -> Result<Vec<usize>, UrlError> {
        let mut list = Vec::new();
        for (pos, tok) in tokens {
            let index = parse_index(tok, pos)?;
            if index >= node_count {
                return Err(UrlError::at(pos, UrlErrorKind::IndexOutOfRange(index)));
            }
            list.push(index);
        }
        Ok(list)
    };

    let (src_pos, src_text) = segments[0];
    if src_text.is_empty() {
        return Err(UrlError::at(src_pos, UrlErrorKind::EmptySegment));
    }
    let source_edges = parse_list(&mut tokens_with_offsets(src_text, src_pos))?;

    let mut nodes = Vec::with_capacity(node_count);
    for &(pos, text) in &segments[1..] {
        if text.is_empty() {
            return Err(UrlError::at(pos, UrlErrorKind::EmptySegment));
        }
        let mut tokens = tokens_with_offsets(text, pos);
        let (_, xid_text) = tokens.next().expect("split yields at least one token");
        let xid: Xid = xid_text
            .parse()
            .map_err(|e| UrlError::at(pos, UrlErrorKind::BadXid(e)))?;
        let edges = parse_list(&mut tokens)?;
        nodes.push((xid, edges));
    }

    let segment_pos = |node: usize| segments.get(node + 1).map_or(body_start, |s| s.0);
    validate(&nodes, &source_edges).map_err(|e| {
        let pos = match &e {
            AddressError::Cycle(n) | AddressError::Unreachable(n) => segment_pos(*n),
            AddressError::DuplicateXid(x) => {
                segment_pos(nodes.iter().rposition(|(n, _)| n == x).unwrap_or(0))
            }
            _ => body_start,
        };
        UrlError::at(pos, UrlErrorKind::Address(e))
    })?;
    let dag = DagAddress::new(nodes, source_edges).map_err(|e| UrlError::at(body_start, UrlErrorKind::Address(e)))?;
    let intent = dag.intent().xtype();
    if intent != scheme_type {
        return Err(UrlError::at(
            0,
            UrlErrorKind::SchemeMismatch { scheme: scheme.to_string(), intent },
        ));
    }
    Ok(dag)
}

fn tokens_with_offsets(text: &str, start: usize) -> impl Iterator<Item = (usize, &str)> {
    let mut offset = start;
    text.split(',').map(move |tok| {
        let at = offset;
        offset += tok.len() + 1;
        (at, tok)
    })
}

impl fmt::Display for DagAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serialize_dag_url(self))
    }
}

impl FromStr for DagAddress {
    type Err = UrlError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_dag_url(s)
    }
}

/// An nCID URL: a human-readable address plus ordered locators.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NcidUrl {
    address: String,
    locators: Vec<(String, String)>,
}

impl NcidUrl {
    pub fn new(address: impl Into<String>, locators: Vec<(String, String)>) -> Result<Self, UrlErrorKind> {
        let address = address.into();
        if address.is_empty() {
            return Err(UrlErrorKind::EmptyAddress);
        }
        for (i, (key, _)) in locators.iter().enumerate() {
            if key.is_empty() {
                return Err(UrlErrorKind::EmptyKey);
            }
            if locators[..i].iter().any(|(k, _)| k == key) {
                return Err(UrlErrorKind::DuplicateKey(key.clone()));
            }
        }
        Ok(Self { address, locators })
    }

    /// An address with no locators.
    pub fn bare(address: impl Into<String>) -> Result<Self, UrlErrorKind> {
        Self::new(address, Vec::new())
    }

    pub fn address(&self) -> &str {
        &self.address
    }

    pub fn locators(&self) -> &[(String, String)] {
        &self.locators
    }

    pub fn locator(&self, key: &str) -> Option<&str> {
        self.locators.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// Returns a copy with `key` set, replacing any existing value in place.
    pub fn with_locator(mut self, key: impl Into<String>, value: impl Into<String>) -> Result<Self, UrlErrorKind> {
        let key = key.into();
        if key.is_empty() {
            return Err(UrlErrorKind::EmptyKey);
        }
        let value = value.into();
        match self.locators.iter_mut().find(|(k, _)| *k == key) {
            Some(slot) => slot.1 = value,
            None => self.locators.push((key, value)),
        }
        Ok(self)
    }

    /// The certificate address from the `PubCert` locator, if present.
    pub fn pub_cert(&self) -> Option<Result<DagAddress, UrlError>> {
        self.locator(LOCATOR_PUB_CERT).map(parse_dag_url)
    }

    /// The nCID this URL names when published under `public_key`.
    pub fn ncid_for(&self, public_key: &[u8]) -> Result<Xid, ChunkError> {
        compute_ncid(&self.canonical_name(), &fingerprint(public_key))
    }

    /// The string hashed into the nCID: the escaped address, then, when any
    /// non-`PubCert` locators exist, `/` and those locators sorted by key as
    /// escaped `key=value` joined by `&`.
    pub fn canonical_name(&self) -> String {
        let mut name = utf8_percent_encode(&self.address, ADDRESS_SET).to_string();
        let mut locs: Vec<&(String, String)> =
            self.locators.iter().filter(|(k, _)| k != LOCATOR_PUB_CERT).collect();
        if !locs.is_empty() {
            locs.sort_by(|a, b| a.0.cmp(&b.0));
            name.push('/');
            push_locators(&mut name, locs.into_iter());
        }
        name
    }
}

fn push_locators<'a>(out: &mut String, locs: impl Iterator<Item = &'a (String, String)>) {
    for (i, (k, v)) in locs.enumerate() {
        if i > 0 {
            out.push('&');
        }
        out.extend(utf8_percent_encode(k, LOCATOR_SET));
        out.push('=');
        out.extend(utf8_percent_encode(v, LOCATOR_SET));
    }
}

pub fn serialize_ncid_url(url: &NcidUrl) -> String {
    let mut out = String::from(NCID_PREFIX);
    out.extend(utf8_percent_encode(&url.address, ADDRESS_SET));
    out.push('/');
    push_locators(&mut out, url.locators.iter());
    out
}

/// Checks escapes and reserved characters, then decodes.
fn decode_component(text: &str, start: usize, reserved: &[u8]) -> Result<String, UrlError> {
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        if b == b'%' {
            let ok = i + 2 < bytes.len()
                && bytes[i + 1].is_ascii_hexdigit()
                && bytes[i + 2].is_ascii_hexdigit();
            if !ok {
                return Err(UrlError::at(start + i, UrlErrorKind::BadEscape));
            }
            i += 3;
            continue;
        }
        if reserved.contains(&b) {
            return Err(UrlError::at(start + i, UrlErrorKind::ReservedChar(b as char)));
        }
        i += 1;
    }
    percent_decode_str(text)
        .decode_utf8()
        .map(|s| s.into_owned())
        .map_err(|_| UrlError::at(start, UrlErrorKind::InvalidUtf8))
}

pub fn parse_ncid_url(s: &str) -> Result<NcidUrl, UrlError> {
    let rest = match s.strip_prefix(NCID_PREFIX) {
        Some(rest) => rest,
        None => {
            return Err(match s.find("://") {
                Some(i) => UrlError::at(0, UrlErrorKind::UnknownScheme(s[..i].to_string())),
                None => UrlError::at(0, UrlErrorKind::MissingScheme),
            })
        }
    };
    let start = NCID_PREFIX.len();
    let slash = rest
        .rfind('/')
        .ok_or_else(|| UrlError::at(s.len(), UrlErrorKind::MissingLocatorSlash))?;
    let (addr_text, loc_text) = (&rest[..slash], &rest[slash + 1..]);
    if addr_text.is_empty() {
        return Err(UrlError::at(start, UrlErrorKind::EmptyAddress));
    }
    let address = decode_component(addr_text, start, b"#&=")?;

    let mut locators: Vec<(String, String)> = Vec::new();
    if !loc_text.is_empty() {
        let mut offset = start + slash + 1;
        for pair in loc_text.split('&') {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| UrlError::at(offset, UrlErrorKind::MissingEquals))?;
            if k.is_empty() {
                return Err(UrlError::at(offset, UrlErrorKind::EmptyKey));
            }
            let key = decode_component(k, offset, b"#=")?;
            let value = decode_component(v, offset + k.len() + 1, b"#=")?;
            if locators.iter().any(|(existing, _)| *existing == key) {
                return Err(UrlError::at(offset, UrlErrorKind::DuplicateKey(key)));
            }
            locators.push((key, value));
            offset += pair.len() + 1;
        }
    }
    Ok(NcidUrl { address, locators })
}

impl fmt::Display for NcidUrl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serialize_ncid_url(self))
    }
}

impl FromStr for NcidUrl {
    type Err = UrlError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_ncid_url(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x(s: &str) -> Xid {
        s.parse().unwrap()
    }

    #[test]
    fn serializes_content_and_service_dags() {
        let cid = DagAddress::with_fallback(x("CID-C"), &[x("AD-B"), x("HID-P")]).unwrap();
        assert_eq!(serialize_dag_url(&cid), "cid://2,0/AD-B,1/HID-P,2/CID-C");
        let sid = DagAddress::with_fallback(x("SID-S"), &[x("AD-B"), x("HID-P")]).unwrap();
        assert_eq!(serialize_dag_url(&sid), "sid://2,0/AD-B,1/HID-P,2/SID-S");
        assert_eq!(serialize_dag_url(&DagAddress::direct(x("CID-C"))), "cid://0/CID-C");
    }

    #[test]
    fn parses_back() {
        let dag = parse_dag_url("cid://2,0/AD-B,1/HID-P,2/CID-C").unwrap();
        assert_eq!(dag, DagAddress::with_fallback(x("CID-C"), &[x("AD-B"), x("HID-P")]).unwrap());
        assert_eq!(parse_dag_url("cid://0/CID-C").unwrap(), DagAddress::direct(x("CID-C")));
    }

    #[test]
    fn non_canonical_numbering_is_accepted() {
        // intent numbered first
        let dag = parse_dag_url("cid://0,2/CID-C/HID-P,0/AD-B,1").unwrap();
        assert_eq!(dag.to_string(), "cid://2,0/AD-B,1/HID-P,2/CID-C");
    }

    #[test]
    fn cycle_is_reported_with_position() {
        let url = "cid://2,0/AD-B,1/HID-P,0/CID-C";
        let err = parse_dag_url(url).unwrap_err();
        assert!(matches!(err.kind, UrlErrorKind::Address(AddressError::Cycle(_))), "{err}");
        assert!(err.position == url.find("AD-B").unwrap() || err.position == url.find("HID-P").unwrap());
    }

    #[test]
    fn distinct_parse_errors() {
        let kind = |s: &str| parse_dag_url(s).unwrap_err().kind;
        assert_eq!(kind("2,0/AD-B"), UrlErrorKind::MissingScheme);
        assert!(matches!(kind("xyz://0/CID-C"), UrlErrorKind::UnknownScheme(_)));
        assert!(matches!(kind("sid://0/CID-C"), UrlErrorKind::SchemeMismatch { .. }));
        assert_eq!(kind("cid://0//CID-C"), UrlErrorKind::EmptySegment);
        assert!(matches!(kind("cid://a/CID-C"), UrlErrorKind::BadIndex(_)));
        assert_eq!(kind("cid://1/CID-C"), UrlErrorKind::IndexOutOfRange(1));
        assert!(matches!(kind("cid://0/QQ-C"), UrlErrorKind::BadXid(_)));

        let err = parse_dag_url("cid://0/AD-B,7/CID-C").unwrap_err();
        assert_eq!(err.kind, UrlErrorKind::IndexOutOfRange(7));
        assert_eq!(err.position, "cid://0/AD-B,".len());
    }

    #[test]
    fn ncid_url_examples() {
        let url = NcidUrl::new(
            "content.facebook.com",
            vec![("UserAgent".into(), "Android".into())],
        )
        .unwrap();
        assert_eq!(url.to_string(), "ncid://content.facebook.com/UserAgent=Android");
        assert_eq!(parse_ncid_url(&url.to_string()).unwrap(), url);

        let bare = NcidUrl::bare("a").unwrap();
        assert_eq!(bare.to_string(), "ncid://a/");
        assert_eq!(parse_ncid_url("ncid://a/").unwrap(), bare);
    }

    #[test]
    fn ncid_address_may_contain_slashes() {
        let url = parse_ncid_url("ncid://fb.com/cmu/").unwrap();
        assert_eq!(url.address(), "fb.com/cmu");
        assert_eq!(url.canonical_name(), "fb.com/cmu");
    }

    #[test]
    fn reserved_characters_are_escaped() {
        let url = NcidUrl::new("a", vec![("k&=".into(), "v/%#&x".into())]).unwrap();
        let text = url.to_string();
        assert_eq!(text, "ncid://a/k%26%3D=v%2F%25%23%26x");
        assert_eq!(parse_ncid_url(&text).unwrap(), url);
    }

    #[test]
    fn ncid_parse_errors() {
        let kind = |s: &str| parse_ncid_url(s).unwrap_err().kind;
        assert_eq!(kind("ncid:///UserAgent=x"), UrlErrorKind::EmptyAddress);
        assert_eq!(kind("ncid://a/k=1&k=2"), UrlErrorKind::DuplicateKey("k".into()));
        assert_eq!(kind("ncid://a/k=%zz"), UrlErrorKind::BadEscape);
        assert_eq!(kind("ncid://a/k=%2"), UrlErrorKind::BadEscape);
        assert_eq!(kind("ncid://a/k"), UrlErrorKind::MissingEquals);
        assert_eq!(kind("ncid://a"), UrlErrorKind::MissingLocatorSlash);
        assert!(matches!(kind("http://a/"), UrlErrorKind::UnknownScheme(_)));
        assert_eq!(kind("ncid://a/k=%ff"), UrlErrorKind::InvalidUtf8);
    }

    #[test]
    fn canonical_name_sorts_and_drops_pub_cert() {
        let a = NcidUrl::new(
            "content.facebook.com",
            vec![
                ("UserAgent".into(), "Android".into()),
                (LOCATOR_PUB_CERT.into(), "cid://0/CID-K".into()),
                ("Version".into(), "2".into()),
            ],
        )
        .unwrap();
        assert_eq!(a.canonical_name(), "content.facebook.com/UserAgent=Android&Version=2");
        let b = NcidUrl::new(
            "content.facebook.com",
            vec![("Version".into(), "2".into()), ("UserAgent".into(), "Android".into())],
        )
        .unwrap();
        assert_eq!(a.canonical_name(), b.canonical_name());
        assert_eq!(a.pub_cert().unwrap().unwrap(), DagAddress::direct(x("CID-K")));
    }

    #[test]
    fn missing_pub_cert_is_accepted() {
        let url = parse_ncid_url("ncid://content.facebook.com/UserAgent=Android").unwrap();
        assert!(url.pub_cert().is_none());
    }
}

use std::path::PathBuf;

use super::ScenarioError;
use crate::addressing::DagAddress;
use crate::urls::{parse_dag_url, parse_ncid_url, NcidUrl};

pub const DEFAULT_TTL_MS: u32 = 600_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Data {
    Text(String),
    Hex(Vec<u8>),
    /// Seeded pseudo-random bytes of the given length.
    Random(usize),
}

impl Data {
    fn parse(token: &str) -> Result<Self, String> {
        let (kind, rest) = token.split_once(':').ok_or_else(|| format!("data {token:?} needs a kind prefix"))?;
        match kind {
            "text" => Ok(Data::Text(rest.to_string())),
            "hex" => hex::decode(rest).map(Data::Hex).map_err(|e| format!("bad hex data: {e}")),
            "random" => rest.parse().map(Data::Random).map_err(|_| format!("bad length {rest:?}")),
            _ => Err(format!("unknown data kind {kind:?}; use text:, hex: or random:")),
        }
    }
}

/// A fetch target: a variable bound by an earlier command, or a literal URL.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Target {
    Var(String),
    Url(DagAddress),
}

impl Target {
    fn parse(token: &str) -> Result<Self, String> {
        if token.contains("://") {
            parse_dag_url(token).map(Target::Url).map_err(|e| format!("bad URL {token:?}: {e}"))
        } else {
            Ok(Target::Var(token.to_string()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForgeKind {
    /// CID content with one payload byte flipped.
    Tamper,
    /// The publisher's named chunk with its payload altered, keeping the
    /// original key reference and signature.
    ReuseKey,
    /// Different content under the same name, signed with the attacker's key.
    OwnKey,
}

impl ForgeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ForgeKind::Tamper => "tamper",
            ForgeKind::ReuseKey => "reuse-key",
            ForgeKind::OwnKey => "own-key",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Command {
    Keygen { key: String },
    PublishKey { node: String, var: String, key: String, ttl: u32 },
    Publish { node: String, var: String, data: Data, ttl: u32 },
    PublishNamed { node: String, var: String, key: String, url: NcidUrl, data: Data, ttl: u32 },
    Fetch { node: String, target: Target },
    FetchNamed { node: String, url: NcidUrl, cert: Option<Target> },
    Forge { node: String, var: String, kind: ForgeKind, target: String },
    Destroy { node: String, var: String },
    Advance { ms: u64 },
    Assert { lhs: String, negate: bool, rhs: String },
}

/// A parsed scenario: topology lines and commands, each with its line number.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Script {
    pub topology_file: Option<PathBuf>,
    pub topology_lines: Vec<(usize, String)>,
    pub commands: Vec<(usize, Command)>,
}

const TOPOLOGY_WORDS: [&str; 4] = ["node", "link", "route", "seed"];

impl Script {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let mut script = Script::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.trim();
            if body.is_empty() || body.starts_with('#') {
                continue;
            }
            let words: Vec<&str> = body.split_whitespace().collect();
            if TOPOLOGY_WORDS.contains(&words[0]) {
                script.topology_lines.push((line, body.to_string()));
                continue;
            }
            if words[0] == "topology" {
                let [_, path] = words[..] else {
                    return Err(ScenarioError::at(line, "usage: topology <file>"));
                };
                if script.topology_file.replace(PathBuf::from(path)).is_some() {
                    return Err(ScenarioError::at(line, "topology given twice"));
                }
                continue;
            }
            let cmd = parse_command(&words).map_err(|m| ScenarioError::at(line, m))?;
            script.commands.push((line, cmd));
        }
        Ok(script)
    }
}

/// Splits trailing `key=value` options off the positional words.
fn split_options<'a>(words: &[&'a str], allowed: &[&str]) -> (Vec<&'a str>, Vec<(&'a str, &'a str)>) {
    let mut positional = Vec::new();
    let mut options = Vec::new();
    for w in words {
        match w.split_once('=') {
            Some((k, v)) if allowed.contains(&k) => options.push((k, v)),
            _ => positional.push(*w),
        }
    }
    (positional, options)
}

fn ttl_of(options: &[(&str, &str)]) -> Result<u32, String> {
    match options.iter().find(|(k, _)| *k == "ttl") {
        Some((_, v)) => v.parse().map_err(|_| format!("bad ttl {v:?}")),
        None => Ok(DEFAULT_TTL_MS),
    }
}

fn parse_command(words: &[&str]) -> Result<Command, String> {
    let (pos, opts) = split_options(&words[1..], &["ttl", "cert"]);
    let owned = |s: &str| s.to_string();
    let usage = |u: &str| Err(format!("usage: {} {u}", words[0]));
    Ok(match (words[0], &pos[..]) {
        ("keygen", [key]) => Command::Keygen { key: owned(key) },
        ("keygen", _) => return usage("<key>"),
        ("publish-key", [node, var, key]) => {
            Command::PublishKey { node: owned(node), var: owned(var), key: owned(key), ttl: ttl_of(&opts)? }
        }
        ("publish-key", _) => return usage("<node> <var> <key> [ttl=MS]"),
        ("publish", [node, var, data]) => {
            Command::Publish { node: owned(node), var: owned(var), data: Data::parse(data)?, ttl: ttl_of(&opts)? }
        }
        ("publish", _) => return usage("<node> <var> <data> [ttl=MS]"),
        ("publish-named", [node, var, key, url, data]) => Command::PublishNamed {
            node: owned(node),
            var: owned(var),
            key: owned(key),
            url: parse_ncid_url(url).map_err(|e| format!("bad URL {url:?}: {e}"))?,
            data: Data::parse(data)?,
            ttl: ttl_of(&opts)?,
        },
        ("publish-named", _) => return usage("<node> <var> <key> <ncid-url> <data> [ttl=MS]"),
        ("fetch", [node, target]) => Command::Fetch { node: owned(node), target: Target::parse(target)? },
        ("fetch", _) => return usage("<node> <var|url>"),
        ("fetch-named", [node, url]) => Command::FetchNamed {
            node: owned(node),
            url: parse_ncid_url(url).map_err(|e| format!("bad URL {url:?}: {e}"))?,
            cert: match opts.iter().find(|(k, _)| *k == "cert") {
                Some((_, v)) => Some(Target::parse(v)?),
                None => None,
            },
        },
        ("fetch-named", _) => return usage("<node> <ncid-url> [cert=<var|url>]"),
        ("forge", [node, var, kind, target]) => {
            let kind = match *kind {
                "tamper" => ForgeKind::Tamper,
                "reuse-key" => ForgeKind::ReuseKey,
                "own-key" => ForgeKind::OwnKey,
                other => return Err(format!("unknown forgery {other:?}")),
            };
            Command::Forge { node: owned(node), var: owned(var), kind, target: owned(target) }
        }
        ("forge", _) => return usage("<node> <var> <tamper|reuse-key|own-key> <target-var>"),
        ("destroy", [node, var]) => Command::Destroy { node: owned(node), var: owned(var) },
        ("destroy", _) => return usage("<node> <var>"),
        ("advance", [ms]) => Command::Advance { ms: ms.parse().map_err(|_| format!("bad duration {ms:?}"))? },
        ("advance", _) => return usage("<ms>"),
        ("assert", [lhs, op, rhs]) => {
            let negate = match *op {
                "==" => false,
                "!=" => true,
                other => return Err(format!("unknown comparison {other:?}")),
            };
            Command::Assert { lhs: owned(lhs), negate, rhs: owned(rhs) }
        }
        ("assert", _) => return usage("<lhs> ==|!= <value>"),
        (other, _) => return Err(format!("unknown command {other:?}")),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_commands_and_topology() {
        let s = Script::parse(
            "# demo\nnode a\nnode b\nlink a b delay=2\n\npublish b c1 text:hi ttl=100\nfetch a c1\n\
             assert last.provider == b\nassert a.stored != 0\nforge a f own-key n1\nadvance 50\n",
        )
        .unwrap();
        assert_eq!(s.topology_lines.len(), 3);
        assert_eq!(s.commands.len(), 6);
        assert_eq!(
            s.commands[0],
            (6, Command::Publish { node: "b".into(), var: "c1".into(), data: Data::Text("hi".into()), ttl: 100 })
        );
        assert_eq!(s.commands[3].1, Command::Assert { lhs: "a.stored".into(), negate: true, rhs: "0".into() });
    }

    #[test]
    fn fetch_accepts_urls_and_cert_option() {
        let s = Script::parse("fetch a cid://0/CID-C\nfetch-named a ncid://x/ cert=k1\n").unwrap();
        assert!(matches!(s.commands[0].1, Command::Fetch { target: Target::Url(_), .. }));
        assert!(matches!(&s.commands[1].1, Command::FetchNamed { cert: Some(Target::Var(v)), .. } if v == "k1"));
    }

    #[test]
    fn errors_carry_line_numbers() {
        assert_eq!(Script::parse("\nfrobnicate").unwrap_err().line, 2);
        assert_eq!(Script::parse("publish a b").unwrap_err().line, 1);
        assert_eq!(Script::parse("publish a b blob:1").unwrap_err().line, 1);
        assert_eq!(Script::parse("assert x < 1").unwrap_err().line, 1);
        assert_eq!(Script::parse("topology a\ntopology b").unwrap_err().line, 2);
    }

    #[test]
    fn empty_script_is_empty() {
        assert_eq!(Script::parse("").unwrap(), Script::default());
    }
}

//! Scripted scenarios over a simulated network with a daemon per node.
//!
//! A script mixes topology lines (`node`, `link`, `route`, `seed`, or
//! `topology <file>`) with commands, one per line:
//!
//! ```text
//! keygen <key>
//! publish-key <node> <var> <key> [ttl=MS]
//! publish <node> <var> text:...|hex:...|random:N [ttl=MS]
//! publish-named <node> <var> <key> <ncid-url> <data> [ttl=MS]
//! fetch <node> <var|dag-url>
//! fetch-named <node> <ncid-url> [cert=<var|dag-url>]
//! forge <node> <var> tamper|reuse-key|own-key <target-var>
//! destroy <node> <var>
//! advance <ms>
//! assert <lhs> ==|!= <value>
//! ```
//!
//! `assert` reads `last.<field>` from the latest fetch record,
//! `<node>.<counter>`, `<node>.stored`, `<node>.has.<var>` or `now`.
//! The report is one `key=value` record per command.

mod script;
mod world;

pub use script::{Command, Data, ForgeKind, Script, Target, DEFAULT_TTL_MS};
pub use world::{World, WorldError, DEFAULT_STATE_CHUNKS};

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::addressing::DagAddress;
use crate::chunking::{build_key_chunk, build_ncid_chunk, encode_chunk, Chunk, PublisherKey};
use crate::netsim::{lock, Topology};
use crate::urls::serialize_dag_url;
use crate::xcached::{Fetched, XcacheError, XcacheHandle, XcachedConfig};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("script line {line}: {message}")]
pub struct ScenarioError {
    /// 0 when the problem is not tied to a line.
    pub line: usize,
    pub message: String,
}

impl ScenarioError {
    pub fn at(line: usize, message: impl Into<String>) -> Self {
        Self { line, message: message.into() }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub config: XcachedConfig,
    /// Replaces the topology's seed.
    pub seed: Option<u64>,
    /// Base topology; script topology lines are added to it.
    pub topology: Option<Topology>,
    /// Where relative `topology` paths are resolved.
    pub base_dir: PathBuf,
    /// Persist each node's chunks under this directory.
    pub state_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Report {
    pub lines: Vec<String>,
    pub failed_asserts: usize,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.failed_asserts == 0
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in &self.lines {
            writeln!(f, "{l}")?;
        }
        Ok(())
    }
}

pub fn run_script(text: &str, opts: &RunOptions) -> Result<Report, ScenarioError> {
    run(&Script::parse(text)?, opts)
}

pub fn run(script: &Script, opts: &RunOptions) -> Result<Report, ScenarioError> {
    if script.commands.is_empty() {
        return Ok(Report::default());
    }
    let topology = load_topology(script, opts)?;
    let world = World::build(&topology, &opts.config, opts.state_dir.as_deref())
        .map_err(|e| ScenarioError::at(0, e.to_string()))?;
    let mut runner = Runner {
        world,
        seed: topology.seed,
        handles: BTreeMap::new(),
        keys: BTreeMap::new(),
        certs: BTreeMap::new(),
        vars: BTreeMap::new(),
        last: Vec::new(),
        report: Report::default(),
    };
    for (line, cmd) in &script.commands {
        runner.exec(cmd).map_err(|m| ScenarioError::at(*line, m))?;
    }
    Ok(runner.report)
}

/// The topology a script runs on: the given base, then its `topology`
/// file, then its inline lines, then the seed override.
pub fn load_topology(script: &Script, opts: &RunOptions) -> Result<Topology, ScenarioError> {
    let mut topo = opts.topology.clone().unwrap_or_default();
    if let Some(file) = &script.topology_file {
        let path = if file.is_absolute() { file.clone() } else { opts.base_dir.join(file) };
        let text = std::fs::read_to_string(&path)
            .map_err(|e| ScenarioError::at(0, format!("reading {}: {e}", path.display())))?;
        for (i, raw) in text.lines().enumerate() {
            topo.parse_line(raw, i + 1)
                .map_err(|e| ScenarioError::at(0, format!("{}: {e}", path.display())))?;
        }
    }
    for (line, raw) in &script.topology_lines {
        topo.parse_line(raw, *line).map_err(|e| ScenarioError::at(*line, e.message))?;
    }
    if let Some(seed) = opts.seed {
        topo.seed = seed;
    }
    if topo.nodes.is_empty() {
        return Err(ScenarioError::at(0, "no topology"));
    }
    topo.check().map_err(|m| ScenarioError::at(0, m))?;
    Ok(topo)
}

/// 32 seed bytes for `purpose`/`label`, fixed by the scenario seed.
pub fn derive_seed(seed: u64, purpose: &str, label: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(seed.to_be_bytes());
    h.update(purpose.as_bytes());
    h.update([0]);
    h.update(label.as_bytes());
    h.finalize().into()
}

pub fn derive_key(seed: u64, label: &str) -> PublisherKey {
    PublisherKey::generate(&mut ChaCha8Rng::from_seed(derive_seed(seed, "key", label)))
}

fn materialize(data: &Data, seed: u64, var: &str) -> Vec<u8> {
    match data {
        Data::Text(t) => t.as_bytes().to_vec(),
        Data::Hex(b) => b.clone(),
        Data::Random(n) => {
            let mut out = vec![0u8; *n];
            ChaCha8Rng::from_seed(derive_seed(seed, "data", var)).fill_bytes(&mut out);
            out
        }
    }
}

/// `source provider hops bytes segments retransmits digest` for a fetch
/// made at `node`. A local hit names `node` as provider at 0 hops.
pub fn fetch_fields(node: &str, f: &Fetched) -> Vec<(&'static str, String)> {
    let (source, provider, hops, segs, retx) = match f.stats() {
        None => ("local", node.to_string(), 0, 0, 0),
        Some(s) => (
            "remote",
            s.provider.clone().unwrap_or_else(|| "-".into()),
            s.hops.unwrap_or(0),
            s.data_segments,
            s.retransmits,
        ),
    };
    vec![
        ("source", source.into()),
        ("provider", provider),
        ("hops", hops.to_string()),
        ("bytes", f.payload().len().to_string()),
        ("segments", segs.to_string()),
        ("retransmits", retx.to_string()),
        ("digest", hex::encode(&Sha256::digest(f.payload())[..8])),
    ]
}

/// Renders `key=value` fields separated by spaces.
pub fn render_fields(fields: &[(&str, String)]) -> String {
    fields.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(" ")
}

/// Three nodes in a line, `client - router - publisher`.
pub const DEFAULT_TOPOLOGY: &str = "seed 1\nnode client\nnode router\nnode publisher\nlink client router delay=5\nlink router publisher delay=5\n";

struct Var {
    addr: DagAddress,
    node: String,
}

type Record = Vec<(&'static str, String)>;

struct Runner {
    world: World,
    seed: u64,
    handles: BTreeMap<String, XcacheHandle>,
    keys: BTreeMap<String, PublisherKey>,
    /// Key label to the address of its published key chunk.
    certs: BTreeMap<String, DagAddress>,
    vars: BTreeMap<String, Var>,
    last: Record,
    report: Report,
}

impl Runner {
    fn handle(&mut self, node: &str) -> Result<XcacheHandle, String> {
        if let Some(h) = self.handles.get(node) {
            return Ok(h.clone());
        }
        let h = self.world.daemon(node).map_err(|e| e.to_string())?.handle();
        self.handles.insert(node.to_string(), h.clone());
        Ok(h)
    }

    fn var(&self, name: &str) -> Result<&Var, String> {
        self.vars.get(name).ok_or_else(|| format!("unknown variable {name:?}"))
    }

    fn key(&self, label: &str) -> Result<&PublisherKey, String> {
        self.keys.get(label).ok_or_else(|| format!("unknown key {label:?}; use keygen"))
    }

    fn target(&self, t: &Target) -> Result<(String, DagAddress), String> {
        match t {
            Target::Var(v) => Ok((v.clone(), self.var(v)?.addr.clone())),
            Target::Url(dag) => Ok((serialize_dag_url(dag), dag.clone())),
        }
    }

    fn push(&mut self, rec: Record) {
        self.report.lines.push(render_fields(&rec));
    }

    fn published(&mut self, mut rec: Record, var: &str, node: &str, res: Result<DagAddress, XcacheError>) {
        match res {
            Ok(addr) => {
                rec.push(("xid", addr.intent().to_string()));
                rec.push(("url", serialize_dag_url(&addr)));
                self.vars.insert(var.to_string(), Var { addr, node: node.to_string() });
            }
            Err(e) => {
                rec.push(("result", "error".into()));
                rec.push(("error", e.code().into()));
            }
        }
        self.push(rec);
    }

    fn fetched(&mut self, mut rec: Record, node: &str, res: Result<Fetched, XcacheError>) {
        self.world.settle();
        match res {
            Ok(f) => {
                rec.push(("result", "ok".into()));
                rec.push(("verify", "ok".into()));
                rec.extend(fetch_fields(node, &f));
            }
            Err(e) if e.is_verification() => {
                rec.push(("result", "reject".into()));
                rec.push(("verify", e.code().into()));
            }
            Err(e) => {
                rec.push(("result", "error".into()));
                rec.push(("error", e.code().into()));
            }
        }
        self.last = rec.clone();
        self.push(rec);
    }

    fn exec(&mut self, cmd: &Command) -> Result<(), String> {
        match cmd {
            Command::Keygen { key } => {
                let k = derive_key(self.seed, key);
                let rec = vec![("op", "keygen".into()), ("key", key.clone()), ("fingerprint", hex::encode(k.fingerprint()))];
                self.keys.insert(key.clone(), k);
                self.push(rec);
            }
            Command::PublishKey { node, var, key, ttl } => {
                let h = self.handle(node)?;
                let res = h.put_key(self.key(key)?, *ttl);
                if let Ok(addr) = &res {
                    self.certs.insert(key.clone(), addr.clone());
                }
                let rec = vec![("op", "publish-key".into()), ("node", node.clone()), ("var", var.clone()), ("key", key.clone())];
                self.published(rec, var, node, res);
            }
            Command::Publish { node, var, data, ttl } => {
                let h = self.handle(node)?;
                let bytes = materialize(data, self.seed, var);
                let rec = vec![
                    ("op", "publish".into()),
                    ("node", node.clone()),
                    ("var", var.clone()),
                    ("bytes", bytes.len().to_string()),
                ];
                let res = h.put_chunk(bytes, *ttl);
                self.published(rec, var, node, res);
            }
            Command::PublishNamed { node, var, key, url, data, ttl } => {
                let h = self.handle(node)?;
                let cert = self.certs.get(key).cloned().ok_or_else(|| format!("key {key:?} is not published"))?;
                let bytes = materialize(data, self.seed, var);
                let rec = vec![
                    ("op", "publish-named".into()),
                    ("node", node.clone()),
                    ("var", var.clone()),
                    ("name", url.to_string()),
                    ("bytes", bytes.len().to_string()),
                ];
                let res = h.put_named_content(&url.canonical_name(), bytes, *ttl, self.key(key)?, &cert);
                self.published(rec, var, node, res);
            }
            Command::Fetch { node, target } => {
                let h = self.handle(node)?;
                let (label, dag) = self.target(target)?;
                let res = h.fetch(&dag);
                self.fetched(vec![("op", "fetch".into()), ("node", node.clone()), ("target", label)], node, res);
            }
            Command::FetchNamed { node, url, cert } => {
                let h = self.handle(node)?;
                let cert = cert.as_ref().map(|c| self.target(c)).transpose()?;
                let res = h.get_named_chunk(url, cert.as_ref().map(|c| &c.1));
                let mut rec = vec![("op", "fetch-named".into()), ("node", node.clone()), ("url", url.to_string())];
                if let Some((label, _)) = cert {
                    rec.push(("cert", label));
                }
                self.fetched(rec, node, res);
            }
            Command::Forge { node, var, kind, target } => self.forge(node, var, *kind, target)?,
            Command::Destroy { node, var } => {
                let h = self.handle(node)?;
                let addr = self.var(var)?.addr.clone();
                h.destroy_chunk(&addr).map_err(|e| e.to_string())?;
                self.push(vec![("op", "destroy".into()), ("node", node.clone()), ("var", var.clone())]);
            }
            Command::Advance { ms } => {
                let expired = self.world.advance(*ms);
                self.push(vec![
                    ("op", "advance".into()),
                    ("ms", ms.to_string()),
                    ("now", self.world.now().to_string()),
                    ("expired", expired.len().to_string()),
                ]);
            }
            Command::Assert { lhs, negate, rhs } => {
                let actual = self.lookup(lhs)?;
                let pass = (actual == *rhs) != *negate;
                if !pass {
                    self.report.failed_asserts += 1;
                }
                let expect = if *negate { format!("!{rhs}") } else { rhs.clone() };
                self.push(vec![
                    ("op", "assert".into()),
                    ("lhs", lhs.clone()),
                    ("expect", expect),
                    ("actual", actual),
                    ("result", if pass { "pass" } else { "fail" }.into()),
                ]);
            }
        }
        Ok(())
    }

    fn forge(&mut self, node: &str, var: &str, kind: ForgeKind, target: &str) -> Result<(), String> {
        let t = self.var(target)?;
        let id = t.addr.intent();
        let honest = self
            .world
            .daemon(&t.node)
            .map_err(|e| e.to_string())?
            .peek(&id)
            .ok_or_else(|| format!("{target:?} is no longer held by {}", t.node))?
            .into_inner();
        let mut payload = honest.payload().to_vec();
        match payload.first_mut() {
            Some(b) => *b ^= 0x01,
            None => payload.push(0),
        }
        let server = self.world.impostor(node).map_err(|e| e.to_string())?;
        let mut net = lock(self.world.net());
        let nid = net.node_id(node).map_err(|e| e.to_string())?;
        let here = [net.ad(nid), net.hid(nid)];
        let forged = match (kind, honest.named()) {
            (ForgeKind::Tamper, None) => Chunk::from_cid_parts(id, honest.ttl_ms(), payload),
            (ForgeKind::ReuseKey, Some(header)) => Chunk::from_named_parts(id, honest.ttl_ms(), header.clone(), payload),
            (ForgeKind::OwnKey, Some(header)) => {
                let attacker = derive_key(self.seed, &format!("{node}/attacker"));
                let key_chunk = build_key_chunk(&attacker, honest.ttl_ms());
                let key_ref = DagAddress::with_fallback(key_chunk.id(), &here).map_err(|e| e.to_string())?;
                server.serve(&mut net, nid, key_chunk.id(), encode_chunk(&key_chunk));
                build_ncid_chunk(&header.name, payload, honest.ttl_ms(), &attacker, key_ref, &Default::default())
            }
            (k, _) => return Err(format!("{} does not apply to {id}", k.as_str())),
        }
        .map_err(|e| e.to_string())?;
        server.serve(&mut net, nid, id, encode_chunk(&forged));
        let addr = DagAddress::with_fallback(id, &here).map_err(|e| e.to_string())?;
        drop(net);
        let rec = vec![
            ("op", "forge".into()),
            ("node", node.to_string()),
            ("var", var.to_string()),
            ("kind", kind.as_str().into()),
            ("target", target.to_string()),
            ("url", serialize_dag_url(&addr)),
        ];
        self.vars.insert(var.to_string(), Var { addr, node: node.to_string() });
        self.push(rec);
        Ok(())
    }

    fn lookup(&self, lhs: &str) -> Result<String, String> {
        if lhs == "now" {
            return Ok(self.world.now().to_string());
        }
        if let Some(field) = lhs.strip_prefix("last.") {
            return Ok(self.last.iter().find(|(k, _)| *k == field).map_or("-".into(), |(_, v)| v.clone()));
        }
        let (node, what) = lhs.split_once('.').ok_or_else(|| format!("cannot evaluate {lhs:?}"))?;
        let d = self.world.daemon(node).map_err(|e| e.to_string())?;
        if let Some(var) = what.strip_prefix("has.") {
            return Ok(d.contains(&self.var(var)?.addr.intent()).to_string());
        }
        let c = d.counters();
        let n = match what {
            "stored" => d.stored_ids().len() as u64,
            "fast_path" => c.fast_path,
            "queued" => c.queued,
            "deduped" => c.deduped,
            "remote_fetches" => c.remote_fetches,
            "sessions_served" => c.sessions_served,
            "ingested" => c.ingested,
            "key_fetches" => c.key_fetches,
            "rejected" => c.rejected,
            _ => return Err(format!("unknown counter {what:?}")),
        };
        Ok(n.to_string())
    }
}

/// Reads a script file, resolving its `topology` line against its directory.
pub fn run_file(path: &Path, opts: &RunOptions) -> Result<Report, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::at(0, format!("reading {}: {e}", path.display())))?;
    let mut opts = opts.clone();
    if opts.base_dir.as_os_str().is_empty() {
        opts.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    }
    run_script(&text, &opts)
}

//! `xcache`: publish, fetch, URL tooling and scripted scenarios over a
//! simulated network whose nodes keep their chunks in a state directory.

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use xcache::addressing::{describe_dag, parse_dag_description, DagAddress};
use xcache::chunking::{read_public_key_file, PublisherKey};
use xcache::netsim::Topology;
use xcache::scenario::{
    derive_key, fetch_fields, render_fields, run_file, RunOptions, World, DEFAULT_TOPOLOGY, DEFAULT_TTL_MS,
};
use xcache::urls::{parse_dag_url, parse_ncid_url, serialize_dag_url, serialize_ncid_url, NcidUrl, LOCATOR_PUB_CERT};
use xcache::xcached::{XcacheError, XcachedConfig};

const EXIT_OTHER: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_PUBLISH: u8 = 3;
const EXIT_UNROUTABLE: u8 = 4;
const EXIT_VERIFY: u8 = 5;
const EXIT_ASSERT: u8 = 6;

#[derive(Parser)]
#[command(name = "xcache", version, about = "Verified content publishing and caching over a simulated network")]
struct Cli {
    /// Daemon configuration file (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the topology seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Topology file. Defaults to client - router - publisher.
    #[arg(long, global = true)]
    topology: Option<PathBuf>,
    /// Directory holding each node's chunks between runs.
    #[arg(long, global = true)]
    state: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Publish a file (or standard input) and print its URL.
    Publish(PublishArgs),
    /// Fetch and verify content, writing the payload out.
    Fetch(FetchArgs),
    /// Run a scenario script and print its report.
    Sim { script: PathBuf },
    /// Convert between DAG descriptions and URLs.
    #[command(subcommand)]
    Url(UrlCmd),
    /// Write a key pair to <prefix>.pub and <prefix>.key.
    Keygen { prefix: PathBuf },
}

#[derive(Args)]
struct PublishArgs {
    file: Option<PathBuf>,
    #[arg(long, default_value = "publisher")]
    node: String,
    #[arg(long, default_value_t = DEFAULT_TTL_MS)]
    ttl: u32,
    /// Publish as named content: a bare name or an `ncid://` URL.
    #[arg(long, requires = "key")]
    name: Option<String>,
    /// `<public-file>,<private-file>`.
    #[arg(long, requires = "name")]
    key: Option<String>,
}

#[derive(Args)]
struct FetchArgs {
    url: String,
    #[arg(long, default_value = "client")]
    node: String,
    /// Certificate address for an `ncid://` name URL.
    #[arg(long)]
    cert: Option<String>,
    /// Print transfer statistics to standard error.
    #[arg(long)]
    stats: bool,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum UrlCmd {
    /// Read a DAG description (file or standard input) and print its URL.
    Encode { file: Option<PathBuf> },
    /// Print the description of a DAG URL.
    Decode { url: String },
    /// Print the nCID for a name under a public key file.
    Ncid { name: String, public_key: PathBuf },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }

    fn usage(message: impl Into<String>) -> Self {
        Self::new(EXIT_USAGE, message)
    }

    fn io(path: &Path, e: io::Error) -> Self {
        Self::new(EXIT_OTHER, format!("{}: {e}", path.display()))
    }

    fn fetch(e: XcacheError) -> Self {
        let code = match &e {
            XcacheError::Unroutable | XcacheError::Timeout => EXIT_UNROUTABLE,
            e if e.is_verification() => EXIT_VERIFY,
            XcacheError::MissingCertificate | XcacheError::NotContent(_) => EXIT_USAGE,
            _ => EXIT_OTHER,
        };
        Self::new(code, format!("fetch failed ({}): {e}", e.code()))
    }

    fn publish(e: XcacheError) -> Self {
        Self::new(EXIT_PUBLISH, format!("publish failed ({}): {e}", e.code()))
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if !f.message.is_empty() {
                eprintln!("xcache: {}", f.message);
            }
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: &Cli) -> Outcome {
    match &cli.cmd {
        Cmd::Publish(a) => publish(cli, a),
        Cmd::Fetch(a) => fetch(cli, a),
        Cmd::Sim { script } => sim(cli, script),
        Cmd::Url(u) => url(u),
        Cmd::Keygen { prefix } => keygen(cli, prefix),
    }
}

fn read_input(file: Option<&Path>) -> Result<Vec<u8>, Failure> {
    match file {
        Some(p) => fs::read(p).map_err(|e| Failure::io(p, e)),
        None => {
            let mut buf = Vec::new();
            io::stdin().read_to_end(&mut buf).map_err(|e| Failure::io(Path::new("<stdin>"), e))?;
            Ok(buf)
        }
    }
}

fn config(cli: &Cli) -> Result<XcachedConfig, Failure> {
    match &cli.config {
        None => Ok(XcachedConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Failure::io(p, e))?;
            XcachedConfig::parse(&text).map_err(|e| Failure::usage(format!("{}: {e}", p.display())))
        }
    }
}

fn topology(cli: &Cli) -> Result<Option<Topology>, Failure> {
    let Some(p) = &cli.topology else {
        return Ok(None);
    };
    let text = fs::read_to_string(p).map_err(|e| Failure::io(p, e))?;
    Topology::parse(&text).map(Some).map_err(|e| Failure::usage(format!("{}: {e}", p.display())))
}

/// The network with every node's chunks loaded from the state directory.
fn world(cli: &Cli) -> Result<World, Failure> {
    let mut topo = match topology(cli)? {
        Some(t) => t,
        None => Topology::parse(DEFAULT_TOPOLOGY).expect("built-in topology parses"),
    };
    if let Some(seed) = cli.seed {
        topo.seed = seed;
    }
    topo.check().map_err(Failure::usage)?;
    let state = cli.state.clone().unwrap_or_else(|| PathBuf::from("xcache-state"));
    World::build(&topo, &config(cli)?, Some(&state)).map_err(|e| Failure::new(EXIT_OTHER, e.to_string()))
}

fn parse_url(s: &str) -> Result<DagAddress, Failure> {
    parse_dag_url(s).map_err(|e| Failure::usage(format!("{s:?}: {e}")))
}

fn publish(cli: &Cli, a: &PublishArgs) -> Outcome {
    let data = read_input(a.file.as_deref())?;
    let named = match (&a.name, &a.key) {
        (Some(name), Some(key)) => Some((name_url(name)?, load_key_pair(key)?)),
        _ => None,
    };
    let world = world(cli)?;
    let h = world.daemon(&a.node).map_err(|e| Failure::usage(e.to_string()))?.handle();
    match named {
        None => {
            let addr = h.put_chunk(data, a.ttl).map_err(Failure::publish)?;
            println!("{}", serialize_dag_url(&addr));
        }
        Some((url, key)) => {
            let cert = h.put_key(&key, a.ttl).map_err(Failure::publish)?;
            let addr = h
                .put_named_content(&url.canonical_name(), data, a.ttl, &key, &cert)
                .map_err(Failure::publish)?;
            let full = url
                .with_locator(LOCATOR_PUB_CERT, serialize_dag_url(&cert))
                .map_err(|e| Failure::usage(e.to_string()))?;
            println!("{}", serialize_ncid_url(&full));
            println!("{}", serialize_dag_url(&addr));
        }
    }
    Ok(())
}

fn name_url(name: &str) -> Result<NcidUrl, Failure> {
    if name.contains("://") {
        parse_ncid_url(name).map_err(|e| Failure::usage(format!("{name:?}: {e}")))
    } else {
        NcidUrl::bare(name).map_err(|e| Failure::usage(format!("{name:?}: {e}")))
    }
}

fn load_key_pair(spec: &str) -> Result<PublisherKey, Failure> {
    let (public, private) = spec.split_once(',').ok_or_else(|| Failure::usage("--key takes <public>,<private>"))?;
    let (public, private) = (Path::new(public), Path::new(private));
    let pb = fs::read(public).map_err(|e| Failure::io(public, e))?;
    let sb = fs::read(private).map_err(|e| Failure::io(private, e))?;
    PublisherKey::from_key_files(&pb, &sb).map_err(|e| Failure::usage(format!("--key: {e}")))
}

fn fetch(cli: &Cli, a: &FetchArgs) -> Outcome {
    // `ncid://` serves both DAG URLs and name URLs; a DAG URL parses as one.
    let target = match parse_dag_url(&a.url) {
        Ok(dag) => Ok(dag),
        Err(_) if a.url.starts_with("ncid://") => match parse_ncid_url(&a.url) {
            Ok(u) => Err(u),
            Err(e) => return Err(Failure::usage(format!("{:?}: {e}", a.url))),
        },
        Err(e) => return Err(Failure::usage(format!("{:?}: {e}", a.url))),
    };
    let cert = a.cert.as_deref().map(parse_url).transpose()?;
    if cert.is_some() && target.is_ok() {
        return Err(Failure::usage("--cert applies only to ncid:// name URLs"));
    }
    let world = world(cli)?;
    let h = world.daemon(&a.node).map_err(|e| Failure::usage(e.to_string()))?.handle();
    let res = match &target {
        Ok(dag) => h.fetch(dag),
        Err(url) => h.get_named_chunk(url, cert.as_ref()),
    };
    world.settle();
    let fetched = res.map_err(Failure::fetch)?;
    if a.stats {
        eprintln!("{}", render_fields(&fetch_fields(&a.node, &fetched)));
    }
    match &a.output {
        Some(p) => fs::write(p, fetched.payload()).map_err(|e| Failure::io(p, e)),
        None => io::stdout().write_all(fetched.payload()).map_err(|e| Failure::io(Path::new("<stdout>"), e)),
    }
}

fn sim(cli: &Cli, script: &Path) -> Outcome {
    let opts = RunOptions {
        config: config(cli)?,
        seed: cli.seed,
        topology: topology(cli)?,
        state_dir: cli.state.clone(),
        ..RunOptions::default()
    };
    let report = run_file(script, &opts).map_err(|e| Failure::usage(format!("{}: {e}", script.display())))?;
    print!("{report}");
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::new(EXIT_ASSERT, format!("{} assertion(s) failed", report.failed_asserts)))
    }
}

fn url(cmd: &UrlCmd) -> Outcome {
    match cmd {
        UrlCmd::Encode { file } => {
            let bytes = read_input(file.as_deref())?;
            let text = String::from_utf8(bytes).map_err(|_| Failure::usage("description is not UTF-8"))?;
            let dag = parse_dag_description(&text).map_err(|e| Failure::usage(e.to_string()))?;
            println!("{}", serialize_dag_url(&dag));
        }
        UrlCmd::Decode { url } => print!("{}", describe_dag(&parse_url(url)?)),
        UrlCmd::Ncid { name, public_key } => {
            let bytes = fs::read(public_key).map_err(|e| Failure::io(public_key, e))?;
            let pk = read_public_key_file(&bytes).map_err(|e| Failure::usage(format!("{}: {e}", public_key.display())))?;
            let id = name_url(name)?.ncid_for(&pk).map_err(|e| Failure::usage(e.to_string()))?;
            println!("{}", id.hex());
        }
    }
    Ok(())
}

fn keygen(cli: &Cli, prefix: &Path) -> Outcome {
    let key = match cli.seed {
        Some(seed) => derive_key(seed, &prefix.to_string_lossy()),
        None => PublisherKey::random(),
    };
    let public = prefix.with_extension("pub");
    let private = prefix.with_extension("key");
    fs::write(&public, key.public_key_file()).map_err(|e| Failure::io(&public, e))?;
    fs::write(&private, key.secret_key_file()).map_err(|e| Failure::io(&private, e))?;
    println!("{}", key.fingerprint().iter().map(|b| format!("{b:02x}")).collect::<String>());
    Ok(())
}

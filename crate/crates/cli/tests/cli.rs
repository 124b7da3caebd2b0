use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use sha2::{Digest, Sha256};
use xcache::scenario::{run_file, RunOptions};

const LINE4: &str = "seed 3\nnode client\nnode client2\nnode router\nnode publisher\n\
                     link client router delay=5\nlink client2 router delay=5\nlink router publisher delay=5\n";

struct Sandbox {
    dir: tempfile::TempDir,
}

impl Sandbox {
    fn new() -> Self {
        let sb = Self { dir: tempfile::tempdir().unwrap() };
        fs::write(sb.path("line4.topo"), LINE4).unwrap();
        sb
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn run(&self, args: &[&str]) -> Output {
        self.run_stdin(args, b"")
    }

    fn run_stdin(&self, args: &[&str], input: &[u8]) -> Output {
        let mut child = Command::new(env!("CARGO_BIN_EXE_xcache"))
            .current_dir(self.dir.path())
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .unwrap();
        child.stdin.take().unwrap().write_all(input).unwrap();
        child.wait_with_output().unwrap()
    }
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn field<'a>(record: &'a str, key: &str) -> &'a str {
    record
        .split_whitespace()
        .find_map(|kv| kv.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .unwrap_or_else(|| panic!("no {key} in {record:?}"))
}

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

#[test]
fn publish_then_fetch_returns_the_bytes_and_caches_on_path() {
    let sb = Sandbox::new();
    let data: Vec<u8> = (0..5000u32).map(|i| (i * 7 % 251) as u8).collect();
    fs::write(sb.path("in.bin"), &data).unwrap();
    let p = sb.run(&["--topology", "line4.topo", "publish", "in.bin"]);
    assert_eq!(code(&p), 0, "{}", stderr(&p));
    let url = stdout(&p).trim().to_string();
    assert!(url.starts_with("cid://"), "{url}");

    let f = sb.run(&["--topology", "line4.topo", "fetch", &url, "--stats", "-o", "out.bin"]);
    assert_eq!(code(&f), 0, "{}", stderr(&f));
    assert_eq!(fs::read(sb.path("out.bin")).unwrap(), data);
    let stats = stderr(&f);
    assert_eq!(field(&stats, "provider"), "publisher");
    assert_eq!(field(&stats, "hops"), "2");
    assert_eq!(field(&stats, "bytes"), "5000");

    let f = sb.run(&["--topology", "line4.topo", "fetch", &url, "--node", "client2", "--stats"]);
    assert_eq!(code(&f), 0);
    assert_eq!(f.stdout, data);
    assert_eq!(field(&stderr(&f), "provider"), "router");
    assert_eq!(field(&stderr(&f), "hops"), "1");
}

#[test]
fn publish_reads_stdin() {
    let sb = Sandbox::new();
    let p = sb.run_stdin(&["publish"], b"from a pipe");
    assert_eq!(code(&p), 0);
    let f = sb.run(&["fetch", stdout(&p).trim()]);
    assert_eq!(f.stdout, b"from a pipe");
}

#[test]
fn oversize_publish_exits_3() {
    let sb = Sandbox::new();
    fs::write(sb.path("big.bin"), vec![1u8; (1 << 20) + 1]).unwrap();
    let p = sb.run(&["publish", "big.bin"]);
    assert_eq!(code(&p), 3, "{}", stderr(&p));
    assert!(p.stdout.is_empty());
}

#[test]
fn unroutable_fetch_exits_4() {
    let sb = Sandbox::new();
    let f = sb.run(&["fetch", "cid://0/CID-00112233445566778899aabbccddeeff00112233"]);
    assert_eq!(code(&f), 4, "{}", stderr(&f));
}

#[test]
fn tampered_provider_exits_5() {
    let sb = Sandbox::new();
    fs::write(sb.path("in.txt"), "the real thing").unwrap();
    let url = stdout(&sb.run(&["publish", "in.txt"])).trim().to_string();
    let hex = url.rsplit("CID-").next().unwrap();
    let file = sb.path(&format!("xcache-state/publisher/{hex}.cid"));
    let mut bytes = fs::read(&file).unwrap();
    *bytes.last_mut().unwrap() ^= 0x20;
    fs::write(&file, bytes).unwrap();

    let f = sb.run(&["fetch", &url]);
    assert_eq!(code(&f), 5, "{}", stderr(&f));
    assert!(stderr(&f).contains("hash-mismatch"), "{}", stderr(&f));
    assert!(f.stdout.is_empty());
    assert!(!sb.path(&format!("xcache-state/client/{hex}.cid")).exists());
    assert!(!sb.path(&format!("xcache-state/router/{hex}.cid")).exists());
}

#[test]
fn named_publish_and_fetch() {
    let sb = Sandbox::new();
    assert_eq!(code(&sb.run(&["keygen", "fb"])), 0);
    fs::write(sb.path("page.html"), "<h1>cmu</h1>").unwrap();
    let p = sb.run(&["publish", "page.html", "--name", "fb.com/cmu", "--key", "fb.pub,fb.key"]);
    assert_eq!(code(&p), 0, "{}", stderr(&p));
    let out = stdout(&p);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("ncid://fb.com/cmu/PubCert="), "{}", lines[0]);
    assert!(lines[1].starts_with("ncid://") && lines[1].contains("nCID-"), "{}", lines[1]);

    // by name, certificate from the URL
    let f = sb.run(&["fetch", lines[0]]);
    assert_eq!(code(&f), 0, "{}", stderr(&f));
    assert_eq!(f.stdout, b"<h1>cmu</h1>");

    // by name with an explicit certificate
    let cert = lines[0].split("PubCert=").nth(1).unwrap().replace("%2F", "/");
    let f = sb.run(&["fetch", "ncid://fb.com/cmu/", "--cert", &cert, "--node", "router"]);
    assert_eq!(code(&f), 0, "{}", stderr(&f));
    assert_eq!(f.stdout, b"<h1>cmu</h1>");

    // by the printed DAG
    let f = sb.run(&["fetch", lines[1], "--node", "router"]);
    assert_eq!(f.stdout, b"<h1>cmu</h1>");

    let f = sb.run(&["fetch", "ncid://fb.com/cmu/"]);
    assert_eq!(code(&f), 2, "{}", stderr(&f));
}

#[test]
fn publish_with_mismatched_key_files_is_a_usage_error() {
    let sb = Sandbox::new();
    sb.run(&["keygen", "a"]);
    sb.run(&["keygen", "b"]);
    let p = sb.run_stdin(&["publish", "--name", "x.org", "--key", "a.pub,b.key"], b"x");
    assert_eq!(code(&p), 2);
    let p = sb.run_stdin(&["publish", "--name", "x.org", "--key", "a.key,a.pub"], b"x");
    assert_eq!(code(&p), 2);
}

#[test]
fn keygen_files_and_seeded_determinism() {
    let sb = Sandbox::new();
    let a = sb.run(&["--seed", "9", "keygen", "k"]);
    let first = fs::read(sb.path("k.key")).unwrap();
    let b = sb.run(&["--seed", "9", "keygen", "k"]);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(fs::read(sb.path("k.key")).unwrap(), first);
    let public = fs::read(sb.path("k.pub")).unwrap();
    assert_eq!((&public[..4], public.len()), (&b"XPUB"[..], 36));
    assert_eq!((&first[..4], first.len()), (&b"XPRV"[..], 36));
    let fp = stdout(&a).trim().to_string();
    assert_eq!(fp, hex::encode(&Sha256::digest(&public[4..])[..20]));
}

#[test]
fn url_encode_decode() {
    let sb = Sandbox::new();
    let desc = "source -> CID-C AD-B\nAD-B -> HID-P\nHID-P -> CID-C\n";
    let e = sb.run_stdin(&["url", "encode"], desc.as_bytes());
    assert_eq!(code(&e), 0, "{}", stderr(&e));
    assert_eq!(stdout(&e), "cid://2,0/AD-B,1/HID-P,2/CID-C\n");
    let d = sb.run(&["url", "decode", "cid://2,0/AD-B,1/HID-P,2/CID-C"]);
    assert_eq!(stdout(&d), desc);

    // a non-canonical numbering decodes to the canonical description
    let d = sb.run(&["url", "decode", "cid://0,2/CID-C/HID-P,0/AD-B,1"]);
    assert_eq!(stdout(&d), desc);
}

#[test]
fn url_parse_errors_exit_2_with_position() {
    let sb = Sandbox::new();
    let d = sb.run(&["url", "decode", "cid://2,0/AD-B,1/HID-P,9/CID-C"]);
    assert_eq!(code(&d), 2);
    assert!(stderr(&d).contains("at byte"), "{}", stderr(&d));
    let e = sb.run_stdin(&["url", "encode"], b"source -> CID-C\nAD-B HID-P\n");
    assert_eq!(code(&e), 2);
    assert!(stderr(&e).contains("line 2"), "{}", stderr(&e));
    let f = sb.run(&["fetch", "cid:/nope"]);
    assert_eq!(code(&f), 2);
}

#[test]
fn url_ncid_matches_an_independent_hash() {
    let sb = Sandbox::new();
    sb.run(&["--seed", "1", "keygen", "fb"]);
    let public = fs::read(sb.path("fb.pub")).unwrap();
    let o = sb.run(&["url", "ncid", "fb.com/cmu", "fb.pub"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let got = stdout(&o).trim().to_string();
    assert_eq!(got.len(), 40);

    let fp = &Sha256::digest(&public[4..])[..20];
    let mut h = Sha256::new();
    h.update(10u32.to_be_bytes());
    h.update(b"fb.com/cmu");
    h.update(fp);
    assert_eq!(got, hex::encode(&h.finalize()[..20]));

    let o = sb.run(&["url", "ncid", "fb.com/cmu", "fb.key"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn sim_report_matches_the_library_and_is_stable() {
    let sb = Sandbox::new();
    for name in ["caching.xsim", "poisoning.xsim", "multiform.xsim"] {
        let script = scenarios().join(name);
        let a = sb.run(&["sim", script.to_str().unwrap()]);
        assert_eq!(code(&a), 0, "{name}: {}", stderr(&a));
        let b = sb.run(&["sim", script.to_str().unwrap()]);
        assert_eq!(a.stdout, b.stdout, "{name}");
        let lib = run_file(&script, &RunOptions::default()).unwrap();
        assert_eq!(stdout(&a), lib.to_string(), "{name}");
    }
}

#[test]
fn sim_caching_shows_publisher_then_router() {
    let sb = Sandbox::new();
    let o = sb.run(&["sim", scenarios().join("caching.xsim").to_str().unwrap()]);
    let report = stdout(&o);
    let providers: Vec<&str> =
        report.lines().filter(|l| l.starts_with("op=fetch ")).map(|l| field(l, "provider")).collect();
    assert_eq!(&providers[..2], ["publisher", "router"]);
}

#[test]
fn sim_poisoning_shows_two_rejects() {
    let sb = Sandbox::new();
    let o = sb.run(&["sim", scenarios().join("poisoning.xsim").to_str().unwrap()]);
    assert_eq!(stdout(&o).lines().filter(|l| l.contains("result=reject")).count(), 2);
}

#[test]
fn sim_exit_codes() {
    let sb = Sandbox::new();
    fs::write(sb.path("empty.xsim"), "").unwrap();
    let o = sb.run(&["sim", "empty.xsim"]);
    assert_eq!((code(&o), o.stdout.len()), (0, 0));

    fs::write(sb.path("fail.xsim"), "node a\npublish a c text:x\nassert a.stored == 2\n").unwrap();
    let o = sb.run(&["sim", "fail.xsim"]);
    assert_eq!(code(&o), 6);
    assert!(stdout(&o).contains("result=fail"));

    fs::write(sb.path("bad.xsim"), "node a\nfrobnicate\n").unwrap();
    let o = sb.run(&["sim", "bad.xsim"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn config_file_is_applied_and_checked() {
    let sb = Sandbox::new();
    fs::write(sb.path("never.conf"), "cache_policy = never\n").unwrap();
    let url = stdout(&sb.run(&["--topology", "line4.topo", "publish", "--ttl", "60000"]));
    let url = url.trim();
    let f = sb.run(&["--topology", "line4.topo", "--config", "never.conf", "fetch", url, "--stats"]);
    assert_eq!(code(&f), 0, "{}", stderr(&f));
    let f = sb.run(&["--topology", "line4.topo", "--config", "never.conf", "fetch", url, "--stats"]);
    assert_eq!(field(&stderr(&f), "provider"), "publisher");

    fs::write(sb.path("bad.conf"), "colour = blue\n").unwrap();
    let f = sb.run(&["--config", "bad.conf", "fetch", url]);
    assert_eq!(code(&f), 2);
}

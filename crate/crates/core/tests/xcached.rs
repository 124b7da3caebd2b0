use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xcache::chunking::{build_ncid_chunk, compute_cid, encode_chunk, ChunkLimits};
use xcache::netsim::{lock, shared, Network, SharedNetwork, StaticContentServer, Topology, TransportConfig};
use xcache::urls::{serialize_dag_url, LOCATOR_PUB_CERT};
use xcache::xcached::{FetchMode, FetchSource, NotifEvent, Notification, XcacheError, Xcached, XcachedConfig};
use xcache::{DagAddress, NcidUrl, PublisherKey, Reject, Xid};

fn random_bytes(len: usize, seed: u64) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.gen()).collect()
}

/// client - router - publisher, plus a second client hanging off the router.
fn topo(loss: f64, seed: u64) -> Topology {
    Topology::new()
        .with_seed(seed)
        .node("client")
        .node("client2")
        .node("router")
        .node("publisher")
        .link("client", "router", 5, loss)
        .link("client2", "router", 5, loss)
        .link("router", "publisher", 5, loss)
}

fn net_of(t: Topology) -> SharedNetwork {
    shared(Network::new(&t, TransportConfig::default()).unwrap())
}

fn daemon(net: &SharedNetwork, node: &str) -> Xcached {
    daemon_with(net, node, |_| {})
}

fn daemon_with(net: &SharedNetwork, node: &str, f: impl FnOnce(&mut XcachedConfig)) -> Xcached {
    let mut cfg = XcachedConfig::default();
    f(&mut cfg);
    Xcached::start(net, node, &cfg).unwrap()
}

fn provider(f: &xcache::xcached::Fetched) -> Option<String> {
    f.stats().and_then(|s| s.provider.clone())
}

fn collect(events: &Arc<Mutex<Vec<Notification>>>) -> impl Fn(&Notification) + Send + Sync + 'static {
    let events = events.clone();
    move |n| events.lock().unwrap().push(n.clone())
}

#[test]
fn local_fetch_takes_the_fast_path() {
    let net = net_of(topo(0.0, 1));
    let publisher = daemon(&net, "publisher");
    let h = publisher.handle();
    let addr = h.put_chunk(b"hello".to_vec(), 10_000).unwrap();
    assert_eq!(addr.intent(), compute_cid(b"hello"));
    let got = h.fetch(&addr).unwrap();
    assert_eq!(got.payload(), b"hello");
    assert_eq!(got.source, FetchSource::Local);
    let c = publisher.counters();
    assert_eq!((c.fast_path, c.queued, c.remote_fetches), (1, 0, 0));
}

#[test]
fn remote_fetch_verifies_and_caches_on_path() {
    let net = net_of(topo(0.0, 1));
    let publisher = daemon(&net, "publisher");
    let router = daemon(&net, "router");
    let client = daemon(&net, "client");
    let data = random_bytes(5000, 3);
    let addr = publisher.handle().put_chunk(data.clone(), 60_000).unwrap();
    let cid = addr.intent();

    let h = client.handle();
    let got = h.fetch(&addr).unwrap();
    assert_eq!(got.payload(), &data[..]);
    assert_eq!(provider(&got).as_deref(), Some("publisher"));
    assert_eq!(got.stats().unwrap().hops, Some(2));
    assert!(router.contains(&cid));
    assert!(client.contains(&cid));
    assert_eq!(router.counters().ingested, 1);

    let again = h.fetch(&addr).unwrap();
    assert_eq!(again.source, FetchSource::Local);

    let other = daemon(&net, "client2").handle().fetch(&addr).unwrap();
    assert_eq!(provider(&other).as_deref(), Some("router"));
    assert_eq!(other.stats().unwrap().hops, Some(1));
    assert_eq!(publisher.counters().sessions_served, 1);
}

#[test]
fn tampered_content_is_rejected_and_not_cached() {
    let net = net_of(topo(0.0, 1));
    let router = daemon(&net, "router");
    let client = daemon(&net, "client");
    let cid = compute_cid(b"genuine");
    let (p, _server) = {
        let mut n = lock(&net);
        let p = n.node_id("publisher").unwrap();
        let server = StaticContentServer::attach(&mut n, p);
        let forged = xcache::chunking::Chunk::from_cid_parts(cid, 60_000, b"forged!".to_vec()).unwrap();
        server.serve(&mut n, p, cid, encode_chunk(&forged));
        (p, server)
    };
    let addr = {
        let n = lock(&net);
        DagAddress::with_fallback(cid, &[n.ad(p), n.hid(p)]).unwrap()
    };
    let err = client.handle().fetch(&addr).unwrap_err();
    assert_eq!(err, XcacheError::Rejected(Reject::HashMismatch));
    assert!(!client.contains(&cid));
    assert!(!router.contains(&cid));
    assert_eq!(router.counters().rejected, 1);
}

#[test]
fn never_policy_router_does_not_cache() {
    let net = net_of(topo(0.0, 1));
    let publisher = daemon(&net, "publisher");
    let router = daemon_with(&net, "router", |c| c.cache_policy = xcache::netsim::CacheMode::Never);
    let client = daemon(&net, "client");
    let addr = publisher.handle().put_chunk(b"x".repeat(3000), 60_000).unwrap();
    client.handle().fetch(&addr).unwrap();
    assert!(!router.contains(&addr.intent()));
    assert!(client.contains(&addr.intent()));
}

#[test]
fn arrival_and_eviction_notifications() {
    let net = net_of(topo(0.0, 1));
    let publisher = daemon(&net, "publisher");
    let client = daemon_with(&net, "client", |c| c.mem_capacity_chunks = 1);
    let p = publisher.handle();
    let a = p.put_chunk(b"aaaa".to_vec(), 60_000).unwrap();
    let b = p.put_chunk(b"bbbb".to_vec(), 60_000).unwrap();

    let h = client.handle();
    let events = Arc::new(Mutex::new(Vec::new()));
    h.register_notif(NotifEvent::ChunkArrived, collect(&events)).unwrap();
    h.register_notif(NotifEvent::ChunkEvicted, collect(&events)).unwrap();
    let silent = client.handle();
    h.fetch(&a).unwrap();
    h.fetch(&b).unwrap();
    assert!(h.notif_channel().unwrap().is_ready());
    assert_eq!(h.process_notif().unwrap(), 3);
    let got: Vec<(NotifEvent, Xid)> = events.lock().unwrap().iter().map(|n| (n.event, n.addr.intent())).collect();
    assert_eq!(
        got,
        vec![
            (NotifEvent::ChunkArrived, a.intent()),
            (NotifEvent::ChunkEvicted, a.intent()),
            (NotifEvent::ChunkArrived, b.intent()),
        ]
    );
    assert_eq!(silent.process_notif().unwrap(), 0);
    let client_node = lock(&net).node_id("client").unwrap();
    assert!(!lock(&net).routes(client_node).is_local(&a.intent()));
    assert!(lock(&net).routes(client_node).is_local(&b.intent()));
}

#[test]
fn ttl_expiry_evicts_once_and_withdraws_the_route() {
    let net = net_of(topo(0.0, 1));
    let publisher = daemon(&net, "publisher");
    let client = daemon(&net, "client");
    let h = publisher.handle();
    let evictions = Arc::new(AtomicUsize::new(0));
    let counter = evictions.clone();
    h.register_notif(NotifEvent::ChunkEvicted, move |_| {
        counter.fetch_add(1, Ordering::SeqCst);
    })
    .unwrap();
    let addr = h.put_chunk(b"short-lived".to_vec(), 100).unwrap();

    lock(&net).advance(99);
    assert!(publisher.sweep().is_empty());
    lock(&net).advance(2);
    assert_eq!(publisher.sweep(), vec![addr.intent()]);
    assert!(publisher.sweep().is_empty());
    h.process_notif().unwrap();
    assert_eq!(evictions.load(Ordering::SeqCst), 1);
    assert_eq!(client.handle().fetch(&addr).unwrap_err(), XcacheError::Unroutable);
}

#[test]
fn zero_ttl_publish_fails() {
    let net = net_of(topo(0.0, 1));
    let publisher = daemon(&net, "publisher");
    assert!(matches!(publisher.handle().put_chunk(b"x".to_vec(), 0), Err(XcacheError::Publish(_))));
}

#[test]
fn destroyed_at_publisher_still_served_by_router_copy() {
    let net = net_of(topo(0.0, 1));
    let publisher = daemon(&net, "publisher");
    let _router = daemon(&net, "router");
    let client = daemon(&net, "client");
    let h = publisher.handle();
    let addr = h.put_chunk(b"replicated".to_vec(), 60_000).unwrap();
    client.handle().fetch(&addr).unwrap();

    h.destroy_chunk(&addr).unwrap();
    h.destroy_chunk(&addr).unwrap();
    assert!(!publisher.contains(&addr.intent()));
    let got = daemon(&net, "client2").handle().fetch(&addr).unwrap();
    assert_eq!(provider(&got).as_deref(), Some("router"));
}

#[test]
fn destroyed_handle_is_invalid_and_cancels_pending_fetches() {
    let net = net_of(topo(0.0, 1));
    let publisher = daemon(&net, "publisher");
    let client = daemon(&net, "client");
    let addr = publisher.handle().put_chunk(b"later".to_vec(), 60_000).unwrap();

    let h = client.handle();
    let pending = {
        let _hold = lock(&net);
        let fetch = h.fetch_chunk(&addr, FetchMode::NonBlocking).unwrap();
        h.destroy();
        match fetch {
            xcache::xcached::Fetch::Pending(t) => t,
            xcache::xcached::Fetch::Done(_) => panic!("fetch finished while the network was held"),
        }
    };
    assert_eq!(pending.wait().unwrap_err(), XcacheError::Canceled);
    assert_eq!(h.put_chunk(b"x".to_vec(), 10).unwrap_err(), XcacheError::InvalidHandle);
    assert_eq!(h.fetch(&addr).unwrap_err(), XcacheError::InvalidHandle);
    assert_eq!(h.process_notif().unwrap_err(), XcacheError::InvalidHandle);
    // Other handles on the same daemon are unaffected.
    assert_eq!(client.handle().fetch(&addr).unwrap().payload(), b"later");
}

#[test]
fn concurrent_requests_for_one_chunk_share_a_fetch() {
    let net = net_of(topo(0.0, 1));
    let publisher = daemon(&net, "publisher");
    let client = daemon(&net, "client");
    let addr = publisher.handle().put_chunk(random_bytes(4000, 9), 60_000).unwrap();
    let handles: Vec<_> = (0..5).map(|_| client.handle()).collect();
    let tickets: Vec<_> = {
        let _hold = lock(&net);
        handles.iter().map(|h| h.fetch_chunk(&addr, FetchMode::NonBlocking).unwrap()).collect()
    };
    for t in tickets {
        assert_eq!(t.wait().unwrap().payload(), &random_bytes(4000, 9)[..]);
    }
    let c = client.counters();
    assert_eq!((c.queued, c.deduped, c.remote_fetches), (5, 4, 1));
    assert_eq!(publisher.counters().sessions_served, 1);
}

#[test]
fn handles_multiplex_independent_fetches() {
    let net = net_of(topo(0.0, 1));
    let publisher = daemon(&net, "publisher");
    let client = daemon(&net, "client");
    let p = publisher.handle();
    let addrs: Vec<_> = (0..4).map(|i| p.put_chunk(random_bytes(2500, i), 60_000).unwrap()).collect();
    let threads: Vec<_> = addrs
        .iter()
        .cloned()
        .enumerate()
        .map(|(i, addr)| {
            let h = client.handle();
            std::thread::spawn(move || {
                let events = Arc::new(Mutex::new(Vec::new()));
                h.register_notif(NotifEvent::ChunkArrived, collect(&events)).unwrap();
                let got = h.fetch(&addr).unwrap();
                assert_eq!(got.payload(), &random_bytes(2500, i as u64)[..]);
                h.id()
            })
        })
        .collect();
    let mut ids: Vec<u64> = threads.into_iter().map(|t| t.join().unwrap()).collect();
    ids.sort();
    ids.dedup();
    assert_eq!(ids.len(), 4);
    assert_eq!(client.stored_ids().len(), 4);
}

#[test]
fn notification_thread_runs_handlers() {
    let net = net_of(topo(0.0, 1));
    let publisher = daemon(&net, "publisher");
    let client = daemon(&net, "client");
    let addr = publisher.handle().put_chunk(b"threaded".to_vec(), 60_000).unwrap();
    let h = client.handle();
    let (tx, rx) = std::sync::mpsc::channel();
    let tx = Mutex::new(tx);
    h.register_notif(NotifEvent::ChunkArrived, move |n| {
        let _ = tx.lock().unwrap().send(n.addr.intent());
    })
    .unwrap();
    let worker = h.launch_notif_thread().unwrap();
    h.fetch(&addr).unwrap();
    assert_eq!(rx.recv_timeout(Duration::from_secs(10)).unwrap(), addr.intent());
    h.destroy();
    worker.join().unwrap();
}

struct Named {
    net: SharedNetwork,
    publisher: Xcached,
    router: Xcached,
    client: Xcached,
    key: PublisherKey,
    cert: DagAddress,
}

fn named_world() -> Named {
    let net = net_of(topo(0.0, 4));
    let publisher = daemon(&net, "publisher");
    let router = daemon(&net, "router");
    let client = daemon(&net, "client");
    let key = PublisherKey::generate(&mut ChaCha8Rng::seed_from_u64(77));
    let cert = publisher.handle().put_key(&key, 600_000).unwrap();
    Named { net, publisher, router, client, key, cert }
}

fn url_for(name: &str, cert: &DagAddress) -> NcidUrl {
    NcidUrl::bare(name).unwrap().with_locator(LOCATOR_PUB_CERT, serialize_dag_url(cert)).unwrap()
}

#[test]
fn named_content_resolves_through_certificate() {
    let w = named_world();
    let url = url_for("videos/intro", &w.cert);
    let ph = w.publisher.handle();
    let addr = ph.put_named_content(&url.canonical_name(), b"intro".to_vec(), 60_000, &w.key, &w.cert).unwrap();

    let got = w.client.handle().get_named_chunk(&url, None).unwrap();
    assert_eq!(got.payload(), b"intro");
    assert_eq!(got.chunk.id(), addr.intent());
    // Content and key chunk are both kept along the path.
    for d in [&w.client, &w.router] {
        assert!(d.contains(&addr.intent()), "{} lacks content", d.name());
        assert!(d.contains(&w.cert.intent()), "{} lacks key", d.name());
    }
    assert_eq!(w.client.audit(), Ok(2));
    assert_eq!(w.router.audit(), Ok(2));
}

#[test]
fn names_and_keys_yield_distinct_ncids() {
    let w = named_world();
    let ph = w.publisher.handle();
    let v1 = url_for("doc", &w.cert).with_locator("Version", "1").unwrap();
    let v2 = url_for("doc", &w.cert).with_locator("Version", "2").unwrap();
    let a1 = ph.put_named_content(&v1.canonical_name(), b"one".to_vec(), 60_000, &w.key, &w.cert).unwrap();
    let a2 = ph.put_named_content(&v2.canonical_name(), b"two".to_vec(), 60_000, &w.key, &w.cert).unwrap();
    assert_ne!(a1.intent(), a2.intent());

    let other = PublisherKey::generate(&mut ChaCha8Rng::seed_from_u64(78));
    let other_cert = ph.put_key(&other, 60_000).unwrap();
    let a3 = ph.put_named_content(&v1.canonical_name(), b"one".to_vec(), 60_000, &other, &other_cert).unwrap();
    assert_ne!(a1.intent(), a3.intent());

    let ch = w.client.handle();
    assert_eq!(ch.get_named_chunk(&v2, None).unwrap().payload(), b"two");
    let bare = NcidUrl::bare("doc").unwrap().with_locator("Version", "1").unwrap();
    assert_eq!(ch.get_named_chunk(&bare, None).unwrap_err(), XcacheError::MissingCertificate);
    assert_eq!(ch.get_named_chunk(&bare, Some(&other_cert)).unwrap().chunk.id(), a3.intent());
}

#[test]
fn publish_with_mismatched_key_ref_fails() {
    let w = named_world();
    let other = PublisherKey::generate(&mut ChaCha8Rng::seed_from_u64(5));
    let wrong_ref = w.publisher.handle().put_key(&other, 60_000).unwrap();
    let err = w.publisher.handle().put_named_content("n", b"p".to_vec(), 60_000, &w.key, &wrong_ref).unwrap_err();
    assert!(matches!(err, XcacheError::Chunk(_)), "{err:?}");
}

/// An impostor node serving `bytes` under `id`, plus the honest cert bytes,
/// so lookups through a certificate located there land on it.
fn impostor(
    net: &SharedNetwork,
    honest_key: &PublisherKey,
    serve: Vec<(Xid, Vec<u8>)>,
) -> (DagAddress, Arc<StaticContentServer>) {
    let mut n = lock(net);
    let evil = n.node_id("client2").unwrap();
    let server = StaticContentServer::attach(&mut n, evil);
    let key_chunk = xcache::chunking::build_key_chunk(honest_key, 60_000);
    server.serve(&mut n, evil, key_chunk.id(), encode_chunk(&key_chunk));
    for (id, bytes) in serve {
        server.serve(&mut n, evil, id, bytes);
    }
    (DagAddress::with_fallback(key_chunk.id(), &[n.ad(evil), n.hid(evil)]).unwrap(), server)
}

#[test]
fn named_publish_needs_the_key_chunk() {
    let net = net_of(topo(0.0, 1));
    let publisher = daemon(&net, "publisher");
    let key = PublisherKey::generate(&mut ChaCha8Rng::seed_from_u64(8));
    let h = publisher.handle();
    let key_id = xcache::chunking::build_key_chunk(&key, 1).id();
    let key_ref = publisher.addr_of(key_id);
    let err = h.put_named_content("fb.com/cmu", b"cmu".to_vec(), 60_000, &key, &key_ref).unwrap_err();
    assert!(matches!(err, XcacheError::Publish(_)), "{err:?}");
    assert_eq!(h.put_key(&key, 60_000).unwrap(), key_ref);
    let addr = h.put_named_content("fb.com/cmu", b"cmu".to_vec(), 60_000, &key, &key_ref).unwrap();
    let got = daemon(&net, "client").handle().fetch(&addr).unwrap();
    assert_eq!(got.payload(), b"cmu");
}

#[test]
fn put_is_idempotent_and_destroy_makes_local_fetch_unroutable() {
    let net = net_of(topo(0.0, 1));
    let publisher = daemon(&net, "publisher");
    let h = publisher.handle();
    let a = h.put_chunk(b"same".to_vec(), 60_000).unwrap();
    let b = h.put_chunk(b"same".to_vec(), 60_000).unwrap();
    assert_eq!(a, b);
    assert_eq!(publisher.stored_ids(), vec![a.intent()]);
    assert!(xcache::urls::serialize_dag_url(&a).starts_with("cid://"));
    h.destroy_chunk(&a).unwrap();
    assert_eq!(h.fetch(&a).unwrap_err(), XcacheError::Unroutable);
}

#[test]
fn named_chunk_under_wrong_name_is_ncid_mismatch() {
    let w = named_world();
    let limits = ChunkLimits::default();
    let url_a = NcidUrl::bare("a").unwrap();
    let url_b = NcidUrl::bare("b").unwrap();
    let chunk_a = build_ncid_chunk(&url_a.canonical_name(), b"A".to_vec(), 60_000, &w.key, w.cert.clone(), &limits).unwrap();
    let ncid_b = xcache::chunking::compute_ncid(&url_b.canonical_name(), &w.key.fingerprint()).unwrap();
    let (cert_at_evil, _server) = impostor(&w.net, &w.key, vec![(ncid_b, encode_chunk(&chunk_a))]);
    let err = w.client.handle().get_named_chunk(&url_b, Some(&cert_at_evil)).unwrap_err();
    assert_eq!(err, XcacheError::Rejected(Reject::NcidMismatch));
    assert!(!w.client.contains(&ncid_b));
}

#[test]
fn poisoned_named_chunks_are_rejected() {
    let w = named_world();
    let limits = ChunkLimits::default();
    let url = NcidUrl::bare("news").unwrap();
    let name = url.canonical_name();
    let honest = build_ncid_chunk(&name, b"the real story".to_vec(), 60_000, &w.key, w.cert.clone(), &limits).unwrap();
    let ncid = honest.id();

    // Same name, key and fingerprint, altered payload.
    let mut reuse = encode_chunk(&honest);
    let at = reuse.windows(14).position(|win| win == b"the real story").unwrap();
    reuse[at] ^= 0x20;
    // Signed by the attacker's own key.
    let attacker = PublisherKey::generate(&mut ChaCha8Rng::seed_from_u64(666));
    let attacker_cert = DagAddress::direct(xcache::chunking::build_key_chunk(&attacker, 1).id());
    let own = build_ncid_chunk(&name, b"fake story".to_vec(), 60_000, &attacker, attacker_cert, &limits).unwrap();

    for (bytes, want) in [(reuse, Reject::SignatureInvalid), (encode_chunk(&own), Reject::NcidMismatch)] {
        let net = net_of(topo(0.0, 4));
        let client = daemon(&net, "client");
        let (cert_at_evil, _server) = impostor(&net, &w.key, vec![(ncid, bytes)]);
        let err = client.handle().get_named_chunk(&url, Some(&cert_at_evil)).unwrap_err();
        assert_eq!(err, XcacheError::Rejected(want));
        assert!(!client.contains(&ncid));
    }
}

#[test]
fn router_ingests_under_loss() {
    for seed in 0..5 {
        let net = net_of(topo(0.1, seed));
        let publisher = daemon(&net, "publisher");
        let router = daemon(&net, "router");
        let client = daemon(&net, "client");
        let data = random_bytes(8 * 1024, seed);
        let addr = publisher.handle().put_chunk(data.clone(), 600_000).unwrap();
        let got = client.handle().fetch(&addr).unwrap();
        assert_eq!(got.payload(), &data[..]);
        assert!(router.contains(&addr.intent()), "seed {seed}");
        assert_eq!(router.audit(), Ok(1));
    }
}

#[test]
fn disk_contents_survive_restart() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = |c: &mut XcachedConfig| {
        c.mem_capacity_chunks = 0;
        c.disk_capacity_chunks = 8;
        c.disk_dir = Some(dir.path().to_path_buf());
    };
    let addr = {
        let net = net_of(topo(0.0, 1));
        let publisher = daemon_with(&net, "publisher", cfg);
        publisher.handle().put_chunk(b"durable".to_vec(), 600_000).unwrap()
    };
    let net = net_of(topo(0.0, 1));
    let publisher = daemon_with(&net, "publisher", cfg);
    assert!(publisher.contains(&addr.intent()));
    let got = daemon(&net, "client").handle().fetch(&addr).unwrap();
    assert_eq!(got.payload(), b"durable");
}

#[test]
fn non_content_intent_is_refused() {
    let net = net_of(topo(0.0, 1));
    let client = daemon(&net, "client");
    let hid: Xid = "HID-publisher".parse().unwrap();
    assert_eq!(client.handle().fetch(&DagAddress::direct(hid)).unwrap_err(), XcacheError::NotContent(hid));
}

#[test]
fn shutdown_refuses_new_remote_fetches() {
    let net = net_of(topo(0.0, 1));
    let publisher = daemon(&net, "publisher");
    let mut client = daemon(&net, "client");
    let addr = publisher.handle().put_chunk(b"late".to_vec(), 60_000).unwrap();
    let h = client.handle();
    client.shutdown();
    assert_eq!(h.fetch(&addr).unwrap_err(), XcacheError::ShutDown);
}
